/**
 * Thin fetch client for the session service. All numbers shown anywhere in
 * the UI come from these responses; the client never computes posteriors.
 */

import type {
  CreateSessionBody,
  PosteriorSnapshot,
  SessionSummary,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await res.json();
    if (!res.ok) {
      const message = body?.error?.message ?? `HTTP ${res.status}`;
      throw new Error(message);
    }
    return body as T;
  }

  createSession(body: CreateSessionBody): Promise<SessionSummary> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listSessions(): Promise<{ sessions: SessionSummary[] }> {
    return this.request("/sessions");
  }

  getSession(id: string): Promise<SessionSummary> {
    return this.request(`/sessions/${id}`);
  }

  reportObservation(
    id: string,
    state: number,
    time: number,
    idempotencyKey?: string,
  ): Promise<SessionSummary> {
    return this.request(`/sessions/${id}/observations`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        state,
        time,
        idempotency_key: idempotencyKey ?? null,
      }),
    });
  }

  advance(id: string, steps = 1): Promise<SessionSummary> {
    return this.request(`/sessions/${id}/advance`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ steps }),
    });
  }

  getPosterior(id: string, resolution = 61): Promise<PosteriorSnapshot> {
    return this.request(`/sessions/${id}/posterior?resolution=${resolution}`);
  }

  deleteSession(id: string): Promise<{ deleted: boolean }> {
    return this.request(`/sessions/${id}`, { method: "DELETE" });
  }
}
