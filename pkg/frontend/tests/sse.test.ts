import { afterEach, describe, expect, it, vi } from "vitest";

import { SseParser, consumeEventStream } from "../src/sse.js";
import type { ServerEvent, Snapshot, TurnRecord } from "../src/types.js";

const turn: TurnRecord = {
  speaker: "customer",
  intents: ["Greet", "Ask"],
  text: "Hi, how much is it?",
  price: null,
  ops: [],
};

const snapshot: Snapshot = {
  seller_price: 89856,
  buyer_price: 89856,
  seller_min_visible: null,
  active_items: ["tablet"],
  inactive_items: ["stylus"],
  status: "accepted",
  t: 1,
  price_rounds_used: 1,
  closed: true,
};

describe("SseParser", () => {
  it("parses a complete turn event", () => {
    const parser = new SseParser();
    const events = parser.push(`event: turn\ndata: ${JSON.stringify(turn)}\n\n`);
    expect(events).toEqual([{ kind: "turn", turn }]);
  });

  it("buffers an event split across chunk boundaries", () => {
    const parser = new SseParser();
    const wire = `event: turn\ndata: ${JSON.stringify(turn)}\n\n`;
    const cut = Math.floor(wire.length / 2);
    expect(parser.push(wire.slice(0, cut))).toEqual([]);
    expect(parser.push(wire.slice(cut))).toEqual([{ kind: "turn", turn }]);
  });

  it("yields multiple events from one chunk in order", () => {
    const parser = new SseParser();
    const wire =
      `event: turn\ndata: ${JSON.stringify(turn)}\n\n` +
      `event: done\ndata: ${JSON.stringify(snapshot)}\n\n`;
    expect(parser.push(wire)).toEqual([
      { kind: "turn", turn },
      { kind: "done", snapshot },
    ]);
  });

  it("ignores blocks without data and unknown event names", () => {
    const parser = new SseParser();
    expect(parser.push(": heartbeat\n\n")).toEqual([]);
    expect(parser.push("event: noise\ndata: {}\n\n")).toEqual([]);
  });
});

describe("consumeEventStream", () => {
  afterEach(() => {
    vi.unstubAllGlobals();
  });

  function streamOf(chunks: string[]): ReadableStream<Uint8Array> {
    const encoder = new TextEncoder();
    return new ReadableStream({
      start(controller) {
        for (const chunk of chunks) {
          controller.enqueue(encoder.encode(chunk));
        }
        controller.close();
      },
    });
  }

  it("invokes the callback per event and stops after done", async () => {
    const wire =
      `event: turn\ndata: ${JSON.stringify(turn)}\n\n` +
      `event: done\ndata: ${JSON.stringify(snapshot)}\n\n` +
      `event: turn\ndata: ${JSON.stringify(turn)}\n\n`;
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => new Response(streamOf([wire.slice(0, 10), wire.slice(10)]))),
    );
    const seen: ServerEvent[] = [];
    await consumeEventStream("http://service/sessions/x/events", (e) => seen.push(e));
    expect(seen.map((e) => e.kind)).toEqual(["turn", "done"]);
  });

  it("rejects when the stream endpoint errors", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => new Response("missing", { status: 404 })),
    );
    await expect(
      consumeEventStream("http://service/sessions/x/events", () => {}),
    ).rejects.toThrow("404");
  });
});
