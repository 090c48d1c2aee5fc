import { NegotiationApi } from "./api.js";
import { SessionController } from "./controller.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8000";
const bundleId = params.get("bundle") ?? "tablet";

const root = document.getElementById("app");
if (root) {
  const controller = new SessionController(new NegotiationApi(baseUrl), root);
  void controller.start(bundleId);
}
