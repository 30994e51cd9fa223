/**
 * End-to-end session flow against a scripted in-memory service: wizard
 * defaults feed session creation, three observations are committed, and
 * every rendered value must be traceable to intercepted server responses
 * (the thin-client property).
 */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { linePath } from "../src/charts";
import { chartData, renderObservationForm, renderSummaryPanel } from "../src/render";
import { SessionStore } from "../src/store";
import type { PosteriorSnapshot, SessionSummary } from "../src/types";
import { defaultsFor, requestBody } from "../src/wizard";

interface RequestLogEntry {
  method: string;
  url: string;
  body: unknown;
}

/** Minimal scripted service: posterior snapshots swap only on commits. */
class FakeService {
  log: RequestLogEntry[] = [];
  steps = 0;
  private axes = [Array.from({ length: 21 }, (_, i) => i * 0.5)];
  private criteria = [1.96, 1.2, 0.6, 0.09];
  private thetas = 0.1;

  private marginal(): number[] {
    // narrower bump after every committed observation
    const width = 4.0 / (this.steps + 1);
    return this.axes[0].map((h) => Math.exp(-((h - 2) ** 2) / width));
  }

  summary(): SessionSummary {
    const converged = this.criteria[this.steps] <= this.thetas;
    return {
      id: "sess-1",
      model: { kind: "two_state_unidirectional", protocol: "reset_each_sample" },
      prior: { variant: "gamma", alpha: 2, beta: 1 },
      mode: { kind: "manual" },
      status: converged ? "converged" : "awaiting_observation",
      steps: this.steps,
      converged,
      theta: this.thetas,
      threshold: this.thetas,
      criterion_value: this.criteria[this.steps],
      recommended_offset: converged ? null : 0.6 + 0.1 * this.steps,
      recommended_time: converged ? null : 0.6 + 0.1 * this.steps,
      objective: converged ? null : this.criteria[this.steps] * 0.8,
      last_observation_time: this.steps > 0 ? this.steps * 0.6 : null,
      x_prev: 0,
      n_states: 2,
      map_estimate: [2 - 0.2 * this.steps],
      mean: [2 - 0.15 * this.steps],
    };
  }

  posterior(): PosteriorSnapshot {
    const snapshot: PosteriorSnapshot = {
      kind: "grid",
      criterion_value: this.criteria[this.steps],
      threshold: this.thetas,
      map_estimate: [2 - 0.2 * this.steps],
      mean: [2 - 0.15 * this.steps],
      covariance: [[this.criteria[this.steps]]],
      axes: this.axes,
      marginals: [this.marginal()],
    };
    if (this.criteria[this.steps] > this.thetas) {
      // the curve's minimum drifts as the posterior sharpens
      snapshot.objective_curve = {
        offsets: [0.01, 0.1, 1, 10],
        values: [4, 2 + 0.3 * this.steps, 1 + 0.5 * this.steps, 3],
      };
    }
    return snapshot;
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.log.push({ method, url, body });
    const respond = (payload: unknown, status = 200) =>
      ({
        ok: status < 400,
        status,
        json: async () => payload,
      }) as Response;

    if (method === "POST" && url.endsWith("/sessions")) {
      return respond(this.summary());
    }
    if (method === "POST" && url.includes("/observations")) {
      if (this.steps >= 3) {
        return respond(
          { error: { code: "not_awaiting", message: "session converged" } },
          409,
        );
      }
      this.steps += 1;
      return respond(this.summary());
    }
    if (url.includes("/posterior")) {
      return respond(this.posterior());
    }
    if (url.includes("/sessions/")) {
      return respond(this.summary());
    }
    throw new Error(`unexpected request: ${method} ${url}`);
  };
}

describe("end-to-end session flow", () => {
  let service: FakeService;
  let api: ApiClient;
  let store: SessionStore;

  beforeEach(() => {
    service = new FakeService();
    api = new ApiClient("http://svc", service.fetch);
    store = new SessionStore(api, "sess-1");
  });

  it("wizard defaults create the session with documented values", async () => {
    const body = requestBody(defaultsFor("two_state_unidirectional"));
    const summary = await api.createSession(body);
    expect(summary.id).toBe("sess-1");
    const logged = service.log[0];
    expect(logged.body).toEqual({
      model: { kind: "two_state_unidirectional" },
      prior: { variant: "gamma", alpha: 2, beta: 1 },
      config: { theta: 0.1 },
      mode: { kind: "manual" },
    });
  });

  it("panels change exactly when server snapshots change", async () => {
    await store.refresh();
    const snapshots = [chartData(store.getState())];

    for (let k = 0; k < 3; k++) {
      const time = store.getState().summary!.recommended_time!;
      const ok = await store.submitObservation(0, time);
      expect(ok).toBe(true);
      snapshots.push(chartData(store.getState()));
    }

    // each committed observation produced a different marginal panel
    for (let k = 1; k < snapshots.length; k++) {
      expect(snapshots[k].marginalPaths[0]).not.toBe(
        snapshots[k - 1].marginalPaths[0],
      );
      expect(snapshots[k].objectivePath).not.toBe(snapshots[k - 1].objectivePath);
    }

    // a refresh without a new commit leaves the panel data identical
    const before = chartData(store.getState());
    await store.refresh();
    expect(chartData(store.getState())).toEqual(before);
  });

  it("gauge reflects the served criterion against the served threshold", async () => {
    await store.refresh();
    const fractions = [chartData(store.getState()).gauge];
    for (let k = 0; k < 3; k++) {
      await store.submitObservation(0, 1 + k);
      fractions.push(chartData(store.getState()).gauge);
    }
    for (let k = 1; k < fractions.length; k++) {
      expect(fractions[k]).toBeGreaterThan(fractions[k - 1]);
    }
    expect(fractions[3]).toBe(1); // served criterion 0.09 <= theta 0.1
  });

  it("converged sessions disable observation entry", async () => {
    await store.refresh();
    for (let k = 0; k < 3; k++) await store.submitObservation(0, 1 + k);
    const html = renderObservationForm(store.getState());
    expect(html).toContain("disabled");
    expect(renderSummaryPanel(store.getState())).toContain("converged");
  });

  it("thin client: every rendered number is traceable to server payloads", async () => {
    await store.refresh();
    await store.submitObservation(0, 0.6);

    // intercepted traffic touches only the documented endpoints
    const urls = service.log.map((e) => e.url);
    for (const url of urls) {
      expect(url).toMatch(
        /\/sessions($|\/sess-1($|\/(observations|posterior)))/,
      );
    }

    // displayed marginal data is exactly the served arrays run through the
    // pure path builder; nothing is recomputed or renormalized client-side
    const state = store.getState();
    const served = service.posterior();
    const expected = linePath(served.axes![0], served.marginals![0]);
    expect(chartData(state).marginalPaths[0]).toBe(expected);
    expect(state.posterior!.criterion_value).toBe(served.criterion_value);
    expect(state.summary!.mean).toEqual(service.summary().mean);
  });

  it("attaches idempotency keys and serializes submissions", async () => {
    await store.refresh();
    await store.submitObservation(0, 0.6);
    const obs = service.log.filter((e) => e.url.includes("/observations"));
    expect(obs.length).toBe(1);
    expect(
      (obs[0].body as { idempotency_key: string }).idempotency_key,
    ).toBeTruthy();
  });

  it("surfaces server rejections without mutating panels", async () => {
    await store.refresh();
    for (let k = 0; k < 3; k++) await store.submitObservation(0, 1 + k);
    const before = chartData(store.getState());
    const ok = await store.submitObservation(0, 99);
    expect(ok).toBe(false);
    expect(store.getState().error).toContain("converged");
    expect(chartData(store.getState())).toEqual(before);
  });
});
