/** Wire types mirroring the negotiation service's JSON protocol. */

export type SpeakerName = "customer" | "agent";

export type BundleOpRecord = {
  op: "add" | "remove";
  id: string;
};

export type TurnRecord = {
  speaker: SpeakerName;
  intents: string[];
  text: string;
  price: number | null;
  ops: BundleOpRecord[];
};

export type Snapshot = {
  seller_price: number;
  buyer_price: number | null;
  seller_min_visible: null;
  active_items: string[];
  inactive_items: string[];
  status: "open" | "accepted" | "rejected";
  t: number;
  price_rounds_used: number;
  closed: boolean;
};

export type BundleItem = {
  id: string;
  name: string;
  price: number;
  kind: string;
  features: string[];
};

export type SessionCreated = {
  session_id: string;
  bundle: {
    id: string;
    items: BundleItem[];
    active: string[];
  };
  seller_price: number;
  snapshot: Snapshot;
};

export type TurnResponse = {
  customer_turn: TurnRecord;
  agent_turn: TurnRecord | null;
  snapshot: Snapshot;
};

export type SessionDetail = {
  session_id: string;
  transcript: TurnRecord[];
  snapshot: Snapshot;
  agent_kind: string;
};

export type ClosedSession = {
  session_id: string;
  dialogue: {
    id: string;
    turns: TurnRecord[];
    outcome: { status: string; final_price: number | null };
  };
};

export type ApiErrorBody = {
  error: string;
  detail: string;
};

/** A structured customer move, mirroring the service's turn schema. */
export type StructuredTurn = {
  intents: string[];
  price_offer?: number;
  ops?: BundleOpRecord[];
};

export type ServerEvent =
  | { kind: "turn"; turn: TurnRecord }
  | { kind: "done"; snapshot: Snapshot };
