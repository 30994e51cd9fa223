/** Wire types for the session service HTTP API. */

export interface SessionSummary {
  id: string;
  model: { kind: string; m?: number; state_cap?: number; protocol: string };
  prior: Record<string, unknown>;
  mode: { kind: "manual" | "simulated" };
  status: "awaiting_observation" | "converged" | "aborted";
  steps: number;
  converged: boolean;
  theta: number;
  threshold: number;
  criterion_value: number;
  recommended_offset: number | null;
  recommended_time: number | null;
  objective: number | null;
  last_observation_time: number | null;
  x_prev: number;
  n_states: number;
  map_estimate: number[];
  mean: number[];
}

export interface ObjectiveCurve {
  offsets: number[];
  values: number[];
}

export interface PosteriorSnapshot {
  kind: "grid" | "binary";
  criterion_value: number;
  threshold: number;
  map_estimate: number[];
  mean: number[];
  covariance: number[][];
  axes?: number[][];
  marginals?: number[][];
  joint?: number[][];
  edge_labels?: string[];
  edge_marginals?: number[];
  objective_curve?: ObjectiveCurve;
}

export interface CreateSessionBody {
  model: Record<string, unknown>;
  prior: Record<string, unknown>;
  config: Record<string, unknown>;
  mode: Record<string, unknown>;
}

export interface ApiError {
  error: { code: string; message: string };
}
