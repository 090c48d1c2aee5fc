import { Window } from "happy-dom";
import { beforeEach, describe, expect, it } from "vitest";

import { initialView, type UiSessionView } from "../src/state.js";
import { render } from "../src/view.js";

const window = new Window();

function makeView(): UiSessionView {
  return initialView({
    session_id: "s1",
    bundle: {
      id: "tablet",
      items: [
        { id: "tablet", name: "Tablet", price: 91100, kind: "main", features: [] },
        { id: "stylus", name: "Stylus", price: 1700, kind: "accessory", features: [] },
      ],
      active: ["tablet", "stylus"],
    },
    seller_price: 95300,
    snapshot: {
      seller_price: 95300,
      buyer_price: null,
      seller_min_visible: null,
      active_items: ["tablet", "stylus"],
      inactive_items: [],
      status: "open",
      t: 0,
      price_rounds_used: 0,
      closed: false,
    },
  });
}

describe("render", () => {
  let root: HTMLElement;

  beforeEach(() => {
    root = window.document.createElement("div") as unknown as HTMLElement;
  });

  it("shows the quote, an empty banner, and enabled controls for an open session", () => {
    render(makeView(), root);
    expect(root.querySelector('[data-testid="asking"]')?.textContent).toContain(
      "$95300",
    );
    expect(root.querySelector('[data-testid="banner"]')?.textContent).toBe("");
    const offer = root.querySelector<HTMLButtonElement>('[data-testid="offer-button"]');
    expect(offer?.disabled).toBe(false);
    expect(offer?.textContent).toBe("Send offer");
  });

  it("keeps the main item checkbox locked while accessories stay editable", () => {
    render(makeView(), root);
    const main = root.querySelector<HTMLInputElement>('input[data-item-id="tablet"]');
    const stylus = root.querySelector<HTMLInputElement>('input[data-item-id="stylus"]');
    expect(main?.disabled).toBe(true);
    expect(main?.checked).toBe(true);
    expect(stylus?.disabled).toBe(false);
    expect(stylus?.checked).toBe(true);
  });

  it("renders transcript rows with intent badges and prices", () => {
    const view = makeView();
    view.transcript.push({
      speaker: "agent",
      intents: ["Greet", "Inform"],
      text: "The bundle is priced at $95300.",
      price: 95300,
      ops: [],
    });
    render(view, root);
    const row = root.querySelector('[data-testid="transcript"] li');
    expect(row?.classList.contains("turn-agent")).toBe(true);
    expect(row?.querySelectorAll(".badge")).toHaveLength(2);
    expect(row?.querySelector(".turn-price")?.textContent).toBe("$95300");
    expect(row?.querySelector(".utterance")?.textContent).toBe(
      "The bundle is priced at $95300.",
    );
  });

  it("relabels the offer button while a deal awaits confirmation", () => {
    const view = makeView();
    view.awaitingAcknowledge = true;
    render(view, root);
    expect(
      root.querySelector('[data-testid="offer-button"]')?.textContent,
    ).toBe("Confirm deal");
  });

  it("disables every control and shows the accepted banner after close", () => {
    const view = makeView();
    view.status = "accepted";
    view.banner = { kind: "accepted", finalPrice: 89856 };
    render(view, root);
    const banner = root.querySelector('[data-testid="banner"]');
    expect(banner?.classList.contains("banner-accepted")).toBe(true);
    expect(banner?.textContent).toBe("Deal accepted at $89856");
    for (const control of root.querySelectorAll<HTMLButtonElement>(
      '[data-testid="controls"] button, [data-testid="controls"] input',
    )) {
      expect(control.disabled).toBe(true);
    }
    expect(
      root.querySelector<HTMLInputElement>('input[data-item-id="stylus"]')?.disabled,
    ).toBe(true);
  });

  it("escapes markup in utterances and error banners", () => {
    const view = makeView();
    view.banner = { kind: "error", message: "<img src=x>" };
    view.transcript.push({
      speaker: "customer",
      intents: ["Ask"],
      text: "<script>alert(1)</script>",
      price: null,
      ops: [],
    });
    render(view, root);
    expect(root.querySelector("img")).toBeNull();
    expect(root.querySelector("script")).toBeNull();
    expect(root.querySelector(".utterance")?.textContent).toBe(
      "<script>alert(1)</script>",
    );
  });
});
