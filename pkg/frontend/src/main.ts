/**
 * Imperative mount layer: hash routing (#/new, #/session/<id>), DOM event
 * wiring, and re-rendering on store commits. All content comes from the
 * pure builders in render.ts.
 */

import { ApiClient } from "./api.js";
import {
  renderCharts,
  renderObservationForm,
  renderSummaryPanel,
  renderTimeline,
} from "./render.js";
import { SessionStore } from "./store.js";
import {
  MODEL_KINDS,
  type ModelKind,
  type WizardState,
  defaultsFor,
  requestBody,
  validate,
} from "./wizard.js";

const BASE_URL =
  (window as unknown as { ADAPTRATE_BASE_URL?: string }).ADAPTRATE_BASE_URL ??
  "";

const api = new ApiClient(BASE_URL);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element ${id}`);
  return node;
}

function renderWizard(root: HTMLElement): void {
  let state: WizardState = defaultsFor("two_state_unidirectional");
  const draw = () => {
    const problems = validate(state);
    root.innerHTML = `
      <h2>new session</h2>
      <form id="wizard">
        <label>chain
          <select id="w-kind">${MODEL_KINDS.map(
            (k) =>
              `<option value="${k}" ${k === state.kind ? "selected" : ""}>${k}</option>`,
          ).join("")}</select>
        </label>
        <label>states m <input id="w-m" type="number" min="2" max="8"
          value="${state.m}" ${state.kind === "ring" || state.kind === "binary" ? "" : "disabled"}></label>
        <label>state cap <input id="w-cap" type="number" min="10"
          value="${state.stateCap}" ${state.kind === "mm1" ? "" : "disabled"}></label>
        <label>threshold θ <input id="w-theta" type="number" step="any"
          value="${state.theta}"></label>
        <label>mode
          <select id="w-mode">
            <option value="manual" ${state.mode === "manual" ? "selected" : ""}>manual</option>
            <option value="simulated" ${state.mode === "simulated" ? "selected" : ""}>simulated</option>
          </select>
        </label>
        <label>true rates <input id="w-htrue" value="${state.hTrue}"
          ${state.mode === "simulated" ? "" : "disabled"} placeholder="1.0, 2.0"></label>
        <label>seed <input id="w-seed" type="number" value="${state.seed}"
          ${state.mode === "simulated" ? "" : "disabled"}></label>
        <ul class="problems">${problems.map((p) => `<li>${p}</li>`).join("")}</ul>
        <button id="w-create" ${problems.length ? "disabled" : ""}>create</button>
      </form>`;
    el("w-kind").addEventListener("change", (e) => {
      state = defaultsFor((e.target as HTMLSelectElement).value as ModelKind);
      draw();
    });
    const bind = (id: string, apply: (v: string) => void) =>
      el(id).addEventListener("change", (e) => {
        apply((e.target as HTMLInputElement).value);
        draw();
      });
    bind("w-m", (v) => (state = { ...state, m: Number(v) }));
    bind("w-cap", (v) => (state = { ...state, stateCap: Number(v) }));
    bind("w-theta", (v) => (state = { ...state, theta: Number(v) }));
    bind("w-mode", (v) => (state = { ...state, mode: v as "manual" | "simulated" }));
    bind("w-htrue", (v) => (state = { ...state, hTrue: v }));
    bind("w-seed", (v) => (state = { ...state, seed: Number(v) }));
    el("w-create").addEventListener("click", async (e) => {
      e.preventDefault();
      const summary = await api.createSession(requestBody(state));
      window.location.hash = `#/session/${summary.id}`;
    });
  };
  draw();
}

function renderDashboard(root: HTMLElement, id: string): void {
  const store = new SessionStore(api, id);
  root.innerHTML = `
    <div id="summary"></div>
    <div id="entry"></div>
    <div id="panels"></div>
    <div id="timeline"></div>
    <p><a href="#/new">new session</a></p>`;
  store.subscribe((state) => {
    el("summary").innerHTML = renderSummaryPanel(state);
    el("entry").innerHTML = renderObservationForm(state);
    el("panels").innerHTML = renderCharts(state);
    el("timeline").innerHTML = renderTimeline(state);
    const submit = document.getElementById("obs-submit");
    if (submit) {
      submit.addEventListener("click", () => {
        const stateIdx = Number(
          (document.getElementById("obs-state") as HTMLSelectElement).value,
        );
        const time = Number(
          (document.getElementById("obs-time") as HTMLInputElement).value,
        );
        void store.submitObservation(stateIdx, time);
      });
    }
    const advance = document.getElementById("obs-advance");
    if (advance) {
      advance.addEventListener("click", () => void store.advance());
    }
  });
  void store.refresh();
}

function route(): void {
  const root = el("app");
  const hash = window.location.hash || "#/new";
  const match = hash.match(/^#\/session\/(.+)$/);
  if (match) {
    renderDashboard(root, match[1]);
  } else {
    renderWizard(root);
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
