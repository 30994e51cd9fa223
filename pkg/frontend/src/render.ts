/**
 * Pure view builders: dashboard state in, HTML strings and chart data out.
 * The imperative layer in main.ts only mounts these strings and wires
 * events, which keeps every rendered number traceable to a server response.
 */

import {
  edgeBars,
  gaugeFraction,
  heatmapCells,
  linePath,
  objectivePath,
} from "./charts.js";
import type { DashboardState } from "./store.js";

export interface ChartData {
  marginalPaths: string[];
  jointCells: ReturnType<typeof heatmapCells>;
  objectivePath: string;
  gauge: number;
  edgeBars: ReturnType<typeof edgeBars>;
}

export function chartData(state: DashboardState): ChartData {
  const post = state.posterior;
  const summary = state.summary;
  if (!post || !summary) {
    return {
      marginalPaths: [],
      jointCells: [],
      objectivePath: "",
      gauge: 0,
      edgeBars: [],
    };
  }
  return {
    marginalPaths:
      post.kind === "grid" && post.axes && post.marginals
        ? post.marginals.map((m, k) => linePath(post.axes![k], m))
        : [],
    jointCells: post.joint ? heatmapCells(post.joint) : [],
    objectivePath: post.objective_curve
      ? objectivePath(post.objective_curve.offsets, post.objective_curve.values)
      : "",
    gauge: gaugeFraction(
      post.criterion_value,
      post.threshold,
      state.initialCriterion ?? post.criterion_value,
    ),
    edgeBars: post.edge_marginals ? edgeBars(post.edge_marginals) : [],
  };
}

const fmt = (v: number | null | undefined, digits = 4): string =>
  v === null || v === undefined ? "-" : v.toPrecision(digits);

export function statePickerOptions(nStates: number): number[] {
  return Array.from({ length: nStates }, (_, k) => k);
}

export function renderSummaryPanel(state: DashboardState): string {
  const s = state.summary;
  if (!s) return "<p>loading…</p>";
  const offset = fmt(s.recommended_offset);
  const absolute = fmt(s.recommended_time);
  const recommendation =
    s.status === "awaiting_observation"
      ? `<p class="recommendation">next sample: <b>t = ${absolute}</b>` +
        ` <span class="offset">(+${offset} after the last sample)</span></p>`
      : `<p class="recommendation">${s.status === "converged" ? "converged" : "stopped at step cap"}</p>`;
  return `
    <h2>session ${s.id.slice(0, 8)}</h2>
    <p>${s.model.kind} · ${s.mode.kind} · ${s.steps} samples</p>
    ${recommendation}
    <p>criterion ${fmt(s.criterion_value)} / threshold ${fmt(s.threshold)}</p>
    <p>MAP [${s.map_estimate.map((v) => fmt(v, 3)).join(", ")}]
       · mean [${s.mean.map((v) => fmt(v, 3)).join(", ")}]</p>`;
}

export function renderObservationForm(state: DashboardState): string {
  const s = state.summary;
  if (!s) return "";
  const disabled = s.status !== "awaiting_observation" || state.submitting;
  const options = statePickerOptions(s.n_states)
    .map((k) => `<option value="${k}">${k}</option>`)
    .join("");
  return `
    <fieldset ${disabled ? "disabled" : ""} id="observation-form">
      <legend>report observation</legend>
      <label>observed state <select id="obs-state">${options}</select></label>
      <label>at time <input id="obs-time" type="number" step="any"
        value="${s.recommended_time ?? ""}"></label>
      <button id="obs-submit">commit</button>
      ${s.mode.kind === "simulated" && !disabled ? '<button id="obs-advance">auto step</button>' : ""}
    </fieldset>
    ${state.error ? `<p class="error">${state.error}</p>` : ""}`;
}

export function renderCharts(state: DashboardState): string {
  const data = chartData(state);
  const marginals = data.marginalPaths
    .map(
      (p, k) => `
      <figure><figcaption>marginal ${k}</figcaption>
        <svg viewBox="0 0 320 160" class="marginal" data-axis="${k}">
          <path d="${p}" fill="none" stroke="steelblue"/>
        </svg></figure>`,
    )
    .join("");
  const joint = data.jointCells.length
    ? `<figure><figcaption>joint density</figcaption>
       <svg viewBox="0 0 160 160" class="joint">${data.jointCells
         .map(
           (c) =>
             `<rect x="${c.x.toFixed(2)}" y="${c.y.toFixed(2)}" width="${c.w.toFixed(2)}"` +
             ` height="${c.h.toFixed(2)}" fill="rgba(178,34,34,${c.value.toFixed(3)})"/>`,
         )
         .join("")}</svg></figure>`
    : "";
  const bars = data.edgeBars.length
    ? `<figure><figcaption>edge probabilities</figcaption>
       <svg viewBox="0 0 320 160" class="edges">${data.edgeBars
         .map(
           (b) =>
             `<rect x="${(b.index * 320) / data.edgeBars.length + 4}" ` +
             `y="${160 - b.barHeight}" width="${320 / data.edgeBars.length - 8}" ` +
             `height="${b.barHeight}" fill="seagreen"/>`,
         )
         .join("")}</svg></figure>`
    : "";
  const objective = data.objectivePath
    ? `<figure><figcaption>expected objective vs offset</figcaption>
       <svg viewBox="0 0 320 160" class="objective">
         <path d="${data.objectivePath}" fill="none" stroke="darkorange"/>
       </svg></figure>`
    : "";
  const gaugeDeg = (data.gauge * 180).toFixed(1);
  return `
    <div class="gauge" data-fraction="${data.gauge.toFixed(4)}">
      <div class="gauge-needle" style="transform: rotate(${gaugeDeg}deg)"></div>
      <span>${(data.gauge * 100).toFixed(0)}% to threshold</span>
    </div>
    <div class="charts">${marginals}${joint}${bars}${objective}</div>`;
}

export function renderTimeline(state: DashboardState): string {
  const s = state.summary;
  if (!s || s.steps === 0) return "<p>no samples yet</p>";
  return `<p>trace length: ${s.steps} samples; last at t = ${fmt(
    s.last_observation_time,
  )}, state ${s.x_prev}</p>`;
}
