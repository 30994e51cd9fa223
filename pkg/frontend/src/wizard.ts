/**
 * New-session form model: per-chain defaults, validation, and the request
 * body for POST /sessions. Defaults mirror the service's documented
 * reference configuration (gamma(2,1) prior and theta 0.1 for the
 * single-rate chain; symmetric bivariate gamma with unit shapes and scale 2
 * elsewhere; relative theta 0.01 for binary structure).
 */

import type { CreateSessionBody } from "./types.js";

export type ModelKind =
  | "two_state_unidirectional"
  | "two_state_bidirectional"
  | "mm1"
  | "ring"
  | "binary";

export interface WizardState {
  kind: ModelKind;
  m: number;
  stateCap: number;
  theta: number;
  mode: "manual" | "simulated";
  hTrue: string; // comma-separated, simulated mode only
  seed: number;
}

export const MODEL_KINDS: ModelKind[] = [
  "two_state_unidirectional",
  "two_state_bidirectional",
  "mm1",
  "ring",
  "binary",
];

export function defaultsFor(kind: ModelKind): WizardState {
  return {
    kind,
    m: 3,
    stateCap: 50,
    theta: kind === "binary" ? 0.01 : 0.1,
    mode: "manual",
    hTrue: "",
    seed: 0,
  };
}

export function rateDimension(state: WizardState): number {
  if (state.kind === "two_state_unidirectional") return 1;
  if (state.kind === "binary") return state.m * (state.m - 1);
  return 2;
}

export function priorFor(state: WizardState): Record<string, unknown> {
  switch (state.kind) {
    case "two_state_unidirectional":
      return { variant: "gamma", alpha: 2.0, beta: 1.0 };
    case "mm1":
      return {
        variant: "truncated_bivariate_gamma",
        a: 1.0,
        b: 1.0,
        mu1: 2.0,
        mu2: 2.0,
      };
    case "binary":
      return { variant: "bernoulli_structure", p: 0.5, m: state.m };
    default:
      return { variant: "bivariate_gamma", a: 1.0, b: 1.0, mu1: 2.0, mu2: 2.0 };
  }
}

export function validate(state: WizardState): string[] {
  const problems: string[] = [];
  if (!(state.theta > 0)) {
    problems.push("theta must be positive");
  }
  if ((state.kind === "ring" || state.kind === "binary") && state.m < 2) {
    problems.push("state count must be at least 2");
  }
  if (state.kind === "binary" && state.m > 4) {
    problems.push("binary structure supports at most 4 states");
  }
  if (state.kind === "mm1" && state.stateCap < 10) {
    problems.push("state cap must be at least 10");
  }
  if (state.mode === "simulated") {
    const rates = parseRates(state.hTrue);
    if (rates === null) {
      problems.push("true rates must be comma-separated numbers");
    } else if (rates.length !== rateDimension(state)) {
      problems.push(`expected ${rateDimension(state)} true rates`);
    } else if (rates.some((r) => r < 0)) {
      problems.push("true rates must be nonnegative");
    }
  }
  return problems;
}

export function parseRates(text: string): number[] | null {
  const parts = text.split(",").map((s) => s.trim()).filter((s) => s !== "");
  if (parts.length === 0) return null;
  const values = parts.map(Number);
  return values.some(Number.isNaN) ? null : values;
}

export function requestBody(state: WizardState): CreateSessionBody {
  const model: Record<string, unknown> = { kind: state.kind };
  if (state.kind === "ring" || state.kind === "binary") model.m = state.m;
  if (state.kind === "mm1") model.state_cap = state.stateCap;
  const mode: Record<string, unknown> = { kind: state.mode };
  if (state.mode === "simulated") {
    mode.h_true = parseRates(state.hTrue);
    mode.seed = state.seed;
  }
  return {
    model,
    prior: priorFor(state),
    config: { theta: state.theta },
    mode,
  };
}
