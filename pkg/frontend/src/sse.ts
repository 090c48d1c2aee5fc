import type { ServerEvent, Snapshot, TurnRecord } from "./types.js";

/**
 * Incremental parser for a server-sent-event byte stream.
 *
 * Feed it decoded text chunks in arrival order; it yields complete events
 * and buffers partial blocks across chunk boundaries.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): ServerEvent[] {
    this.buffer += chunk;
    const events: ServerEvent[] = [];
    let boundary = this.buffer.indexOf("\n\n");
    while (boundary >= 0) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const event = parseBlock(block);
      if (event) {
        events.push(event);
      }
      boundary = this.buffer.indexOf("\n\n");
    }
    return events;
  }
}

function parseBlock(block: string): ServerEvent | null {
  let name = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("event:")) {
      name = line.slice("event:".length).trim();
    } else if (line.startsWith("data:")) {
      dataLines.push(line.slice("data:".length).trim());
    }
  }
  if (dataLines.length === 0) {
    return null;
  }
  const payload = JSON.parse(dataLines.join("\n"));
  if (name === "turn") {
    return { kind: "turn", turn: payload as TurnRecord };
  }
  if (name === "done") {
    return { kind: "done", snapshot: payload as Snapshot };
  }
  return null;
}

/**
 * Consume the session event stream, invoking `onEvent` per event.
 *
 * Resolves when the server signals completion or the stream ends. The
 * server replays the transcript from the start, so reconnecting is just
 * calling this again.
 */
export async function consumeEventStream(
  url: string,
  onEvent: (event: ServerEvent) => void,
  signal?: AbortSignal,
): Promise<void> {
  const response = await fetch(url, { signal });
  if (!response.ok || !response.body) {
    throw new Error(`event stream failed: ${response.status}`);
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) {
      return;
    }
    for (const event of parser.push(decoder.decode(value, { stream: true }))) {
      onEvent(event);
      if (event.kind === "done") {
        await reader.cancel();
        return;
      }
    }
  }
}
