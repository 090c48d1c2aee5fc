import type {
  ApiErrorBody,
  ClosedSession,
  SessionCreated,
  SessionDetail,
  StructuredTurn,
  TurnResponse,
} from "./types.js";

/** Error carrying the service's structured {error, detail} body. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ServiceError(0, "unreachable", String(err));
  }
  const body = await response.json();
  if (!response.ok) {
    const e = body as ApiErrorBody;
    throw new ServiceError(response.status, e.error ?? "unknown", e.detail ?? "");
  }
  return body as T;
}

/** Thin typed client over the negotiation service's HTTP API. */
export class NegotiationApi {
  constructor(readonly baseUrl: string) {}

  createSession(
    bundleId: string,
    config?: Record<string, number>,
  ): Promise<SessionCreated> {
    return request(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ bundle_id: bundleId, config: config ?? {} }),
    });
  }

  postStructuredTurn(
    sessionId: string,
    turn: StructuredTurn,
  ): Promise<TurnResponse> {
    return request(`${this.baseUrl}/sessions/${sessionId}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ structured: turn }),
    });
  }

  postTextTurn(sessionId: string, text: string): Promise<TurnResponse> {
    return request(`${this.baseUrl}/sessions/${sessionId}/turns`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return request(`${this.baseUrl}/sessions/${sessionId}`);
  }

  closeSession(sessionId: string): Promise<ClosedSession> {
    return request(`${this.baseUrl}/sessions/${sessionId}`, {
      method: "DELETE",
    });
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/events`;
  }
}
