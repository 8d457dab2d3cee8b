/** Thin typed client over the annotation service's JSON API. */

import type {
  MetricsPayload,
  NextQuery,
  ResponseAck,
  ScenePayload,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** The server rejects stale or duplicate submissions with 409. */
  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  const text = await res.text();
  let data: unknown = null;
  try {
    data = text ? JSON.parse(text) : null;
  } catch {
    // fall through with data = null; the status check below reports it
  }
  if (!res.ok) {
    const err = (data ?? {}) as { code?: string; message?: string };
    throw new ApiError(res.status, err.code ?? "HttpError", err.message ?? text);
  }
  return data as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  createSession(annotatorId?: string): Promise<SessionInfo> {
    return request<SessionInfo>(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(annotatorId ? { annotator_id: annotatorId } : {}),
    });
  }

  nextQuery(sessionId: string): Promise<NextQuery> {
    return request<NextQuery>(this.url(`/sessions/${sessionId}/query`));
  }

  submitResponse(
    sessionId: string,
    queryId: string,
    outcome: number | null,
    responseMs: number,
  ): Promise<ResponseAck> {
    return request<ResponseAck>(this.url(`/sessions/${sessionId}/response`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        query_id: queryId,
        outcome,
        response_ms: responseMs,
      }),
    });
  }

  submitSurvey(
    sessionId: string,
    question: string,
    answer: string,
  ): Promise<{ accepted: boolean }> {
    return request(this.url(`/sessions/${sessionId}/survey`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question, answer }),
    });
  }

  metrics(sessionId: string): Promise<MetricsPayload> {
    return request<MetricsPayload>(this.url(`/sessions/${sessionId}/metrics`));
  }

  scene(sceneId: string): Promise<ScenePayload> {
    return request<ScenePayload>(this.url(`/scenes/${sceneId}`));
  }
}
