/**
 * Pure chart-data builders. Every function maps server arrays to SVG/DOM
 * data deterministically, so rendering the same posterior snapshot twice
 * yields identical chart data.
 */

export interface HeatCell {
  x: number;
  y: number;
  w: number;
  h: number;
  /** 0..1 intensity relative to the densest cell */
  value: number;
}

const PLOT_W = 320;
const PLOT_H = 160;

/** SVG path string for a marginal density curve. */
export function linePath(
  xs: number[],
  ys: number[],
  width = PLOT_W,
  height = PLOT_H,
): string {
  if (xs.length === 0 || xs.length !== ys.length) return "";
  const xMin = xs[0];
  const xMax = xs[xs.length - 1];
  const yMax = Math.max(...ys, 1e-300);
  const sx = (x: number) => ((x - xMin) / (xMax - xMin || 1)) * width;
  const sy = (y: number) => height - (y / yMax) * (height - 4);
  return xs
    .map((x, i) => `${i === 0 ? "M" : "L"}${sx(x).toFixed(2)},${sy(ys[i]).toFixed(2)}`)
    .join("");
}

/** Log-x SVG path for the objective-vs-offset curve. */
export function objectivePath(
  offsets: number[],
  values: number[],
  width = PLOT_W,
  height = PLOT_H,
): string {
  if (offsets.length === 0 || offsets.length !== values.length) return "";
  const logs = offsets.map((t) => Math.log10(t));
  return linePath(logs, values.map((v) => Math.max(v, 0)), width, height);
}

/** Grid cells for a joint-density heatmap, intensity-normalized. */
export function heatmapCells(
  joint: number[][],
  width = PLOT_H,
  height = PLOT_H,
): HeatCell[] {
  const rows = joint.length;
  const cols = rows > 0 ? joint[0].length : 0;
  if (rows === 0 || cols === 0) return [];
  let top = 0;
  for (const row of joint) for (const v of row) top = Math.max(top, v);
  const cells: HeatCell[] = [];
  const cw = width / rows;
  const ch = height / cols;
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      cells.push({
        x: i * cw,
        y: height - (j + 1) * ch,
        w: cw,
        h: ch,
        value: top > 0 ? joint[i][j] / top : 0,
      });
    }
  }
  return cells;
}

/**
 * Convergence gauge: fraction of the way from the starting criterion down
 * to the threshold, on a log scale (1 = converged, 0 = no progress).
 */
export function gaugeFraction(
  criterion: number,
  threshold: number,
  initial: number,
): number {
  if (criterion <= threshold) return 1;
  if (initial <= threshold || criterion >= initial) return 0;
  const span = Math.log(initial) - Math.log(threshold);
  const progress = Math.log(initial) - Math.log(criterion);
  return Math.min(1, Math.max(0, progress / span));
}

/** Bar heights for binary edge-presence marginals. */
export function edgeBars(
  marginals: number[],
  height = PLOT_H,
): { index: number; barHeight: number }[] {
  return marginals.map((p, index) => ({
    index,
    barHeight: Math.max(0, Math.min(1, p)) * height,
  }));
}
