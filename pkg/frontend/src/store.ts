/**
 * Session dashboard state. Holds the last committed server snapshot and
 * refreshes it after every committed observation; at most one submission is
 * in flight and the UI never renders a value the server has not confirmed.
 */

import type { ApiClient } from "./api.js";
import type { PosteriorSnapshot, SessionSummary } from "./types.js";

export interface DashboardState {
  summary: SessionSummary | null;
  posterior: PosteriorSnapshot | null;
  /** bumped only when a fresh server snapshot is committed */
  version: number;
  submitting: boolean;
  error: string | null;
  /** criterion before any observation, for gauge scaling */
  initialCriterion: number | null;
}

export type Listener = (state: DashboardState) => void;

export class SessionStore {
  private state: DashboardState = {
    summary: null,
    posterior: null,
    version: 0,
    submitting: false,
    error: null,
    initialCriterion: null,
  };
  private listeners: Listener[] = [];
  private submissionCounter = 0;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private resolution = 61,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  getState(): DashboardState {
    return this.state;
  }

  private commit(partial: Partial<DashboardState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  async refresh(): Promise<void> {
    const summary = await this.api.getSession(this.sessionId);
    const posterior = await this.api.getPosterior(this.sessionId, this.resolution);
    this.commit({
      summary,
      posterior,
      version: this.state.version + 1,
      error: null,
      initialCriterion:
        this.state.initialCriterion ?? summary.criterion_value,
    });
  }

  /** Report a manual observation; refreshes only after the server commits. */
  async submitObservation(state: number, time: number): Promise<boolean> {
    if (this.state.submitting) return false;
    const key = `ui-${this.sessionId}-${++this.submissionCounter}`;
    this.commit({ submitting: true });
    try {
      await this.api.reportObservation(this.sessionId, state, time, key);
      await this.refresh();
      return true;
    } catch (err) {
      this.commit({ error: err instanceof Error ? err.message : String(err) });
      return false;
    } finally {
      this.commit({ submitting: false });
    }
  }

  /** One simulation step (simulated sessions only). */
  async advance(): Promise<boolean> {
    if (this.state.submitting) return false;
    this.commit({ submitting: true });
    try {
      await this.api.advance(this.sessionId, 1);
      await this.refresh();
      return true;
    } catch (err) {
      this.commit({ error: err instanceof Error ? err.message : String(err) });
      return false;
    } finally {
      this.commit({ submitting: false });
    }
  }
}
