import type {
  BundleItem,
  SessionCreated,
  Snapshot,
  TurnRecord,
} from "./types.js";

export type PricePoint = {
  speaker: "customer" | "agent";
  price: number;
};

export type Banner =
  | { kind: "none" }
  | { kind: "accepted"; finalPrice: number | null }
  | { kind: "rejected" }
  | { kind: "error"; message: string };

/**
 * The whole view state of one negotiation session.
 *
 * Every number here is echoed from a service response or event; the
 * client never computes prices itself.
 */
export type UiSessionView = {
  sessionId: string;
  bundleId: string;
  items: BundleItem[];
  activeItems: Set<string>;
  transcript: TurnRecord[];
  priceHistory: PricePoint[];
  sellerPrice: number;
  buyerPrice: number | null;
  status: Snapshot["status"];
  banner: Banner;
  awaitingAcknowledge: boolean;
};

export function initialView(created: SessionCreated): UiSessionView {
  return {
    sessionId: created.session_id,
    bundleId: created.bundle.id,
    items: created.bundle.items,
    activeItems: new Set(created.bundle.active),
    transcript: [],
    priceHistory: [],
    sellerPrice: created.seller_price,
    buyerPrice: null,
    status: created.snapshot.status,
    banner: { kind: "none" },
    awaitingAcknowledge: false,
  };
}

/** Append one turn (from a response or the event stream), deduplicating
 * replayed events by position. */
export function applyTurn(view: UiSessionView, turn: TurnRecord, index?: number): void {
  if (index !== undefined && index < view.transcript.length) {
    return; // replay of a turn we already rendered
  }
  view.transcript.push(turn);
  if (turn.price !== null) {
    view.priceHistory.push({ speaker: turn.speaker, price: turn.price });
  }
  for (const op of turn.ops) {
    if (op.op === "remove") {
      view.activeItems.delete(op.id);
    } else {
      view.activeItems.add(op.id);
    }
  }
  if (turn.speaker === "agent" && turn.intents.includes("Accept")) {
    view.awaitingAcknowledge = true;
  }
}

/** Fold a fresh deal snapshot into the view; the snapshot is authoritative. */
export function applySnapshot(view: UiSessionView, snapshot: Snapshot): void {
  view.sellerPrice = snapshot.seller_price;
  view.buyerPrice = snapshot.buyer_price;
  view.status = snapshot.status;
  view.activeItems = new Set(snapshot.active_items);
  if (snapshot.status === "accepted") {
    view.banner = { kind: "accepted", finalPrice: snapshot.seller_price };
    view.awaitingAcknowledge = false;
  } else if (snapshot.status === "rejected") {
    view.banner = { kind: "rejected" };
  }
}

export function setError(view: UiSessionView, message: string): void {
  view.banner = { kind: "error", message };
}

export function clearError(view: UiSessionView): void {
  if (view.banner.kind === "error") {
    view.banner = { kind: "none" };
  }
}

export function controlsEnabled(view: UiSessionView): boolean {
  return view.status === "open";
}
