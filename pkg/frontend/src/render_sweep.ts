/**
 * Convergence figures: one log-log panel per sweep metric, with the
 * ensemble median per eps, a 5th-95th percentile whisker, the fitted
 * rate line and the slope spelled out. The slope comes from the sweep
 * file itself whenever it carries one; a local fit of the medians is
 * only a fallback for display, and the caption says which one it is.
 */

import { basename } from "node:path";
import { discover } from "./discover.js";
import { MissingDataError, SweepFile, SweepRow } from "./formats.js";
import { logLogFit } from "./fit.js";
import { FigureFormat, writeFigure } from "./raster.js";
import { Axis, fmt, padLog, PLOT, Scene } from "./svg.js";

const POINT = "#1f5fa8";
const LINE = "#c23b22";
const GRID = "#d8d8d8";
const AXIS = "#1a1a1a";

interface MetricSeries {
  metric: string;
  rows: SweepRow[];
}

function seriesOf(sweep: SweepFile): MetricSeries[] {
  const byMetric = new Map<string, SweepRow[]>();
  for (const row of sweep.rows) {
    const rows = byMetric.get(row.metric);
    if (rows) {
      rows.push(row);
    } else {
      byMetric.set(row.metric, [row]);
    }
  }
  return [...byMetric.keys()].sort().map((metric) => ({
    metric,
    rows: byMetric
      .get(metric)!
      .slice()
      .sort((a, b) => b.eps - a.eps),
  }));
}

function decadeTicks(lo: number, hi: number): number[] {
  const kLo = Math.ceil(Math.log10(lo) - 1e-9);
  const kHi = Math.floor(Math.log10(hi) + 1e-9);
  const ticks: number[] = [];
  const step = Math.max(1, Math.ceil((kHi - kLo + 1) / 7));
  for (let k = kLo; k <= kHi; k += step) {
    ticks.push(Math.pow(10, k));
  }
  return ticks;
}

function drawMetric(sweep: SweepFile, series: MetricSeries): string {
  const drawable = series.rows.filter(
    (r) => Number.isFinite(r.median) && r.median > 0,
  );
  const epsLo = drawable[drawable.length - 1].eps;
  const epsHi = drawable[0].eps;
  let yLo = Infinity;
  let yHi = -Infinity;
  for (const r of drawable) {
    const lo = Number.isFinite(r.q05) && r.q05 > 0 ? r.q05 : r.median;
    const hi = Number.isFinite(r.q95) && r.q95 > 0 ? r.q95 : r.median;
    yLo = Math.min(yLo, lo);
    yHi = Math.max(yHi, hi);
  }
  const [xLo, xHi] = padLog(epsLo, epsHi);
  const [vLo, vHi] = padLog(yLo, yHi);
  const xAxis = new Axis(xLo, xHi, PLOT.x0, PLOT.x1, true);
  const yAxis = new Axis(vLo, vHi, PLOT.y1, PLOT.y0, true);

  const fromFile = drawable.find((r) => Number.isFinite(r.slope));
  const fit = fromFile
    ? { slope: fromFile.slope, stderr: fromFile.slopeStderr }
    : logLogFit(drawable.map((r) => r.eps), drawable.map((r) => r.median));
  const slopeSource = fromFile
    ? "slope from results file"
    : "slope fit of medians for display";

  const scene = new Scene();
  scene.text((PLOT.x0 + PLOT.x1) / 2, PLOT.y0 - 16,
             `${series.metric} vs eps`, 15, "middle");

  for (const tick of decadeTicks(vLo, vHi)) {
    const y = yAxis.place(tick);
    scene.line(PLOT.x0, y, PLOT.x1, y, GRID);
    scene.text(PLOT.x0 - 8, y + 4, fmt(tick, 2), 11, "end");
  }
  for (const r of drawable) {
    const x = xAxis.place(r.eps);
    scene.line(x, PLOT.y1, x, PLOT.y1 + 5, AXIS);
    scene.text(x, PLOT.y1 + 20, fmt(r.eps, 3), 11, "middle");
  }
  scene.line(PLOT.x0, PLOT.y1, PLOT.x1, PLOT.y1, AXIS);
  scene.line(PLOT.x0, PLOT.y0, PLOT.x0, PLOT.y1, AXIS);
  scene.text((PLOT.x0 + PLOT.x1) / 2, PLOT.y1 + 38, "eps", 12, "middle");

  // rate line through the log-centroid of the drawn medians
  const cx =
    drawable.reduce((a, r) => a + Math.log(r.eps), 0) / drawable.length;
  const cy =
    drawable.reduce((a, r) => a + Math.log(r.median), 0) / drawable.length;
  const lineY = (e: number): number =>
    Math.exp(cy + fit.slope * (Math.log(e) - cx));
  scene.line(xAxis.place(epsLo), yAxis.place(lineY(epsLo)),
             xAxis.place(epsHi), yAxis.place(lineY(epsHi)), LINE, 1.5);
  scene.text(PLOT.x1 - 6, PLOT.y0 + 16,
             `slope ${fmt(fit.slope, 3)}`, 13, "end", LINE);

  for (const r of drawable) {
    const x = xAxis.place(r.eps);
    if (Number.isFinite(r.q05) && r.q05 > 0 &&
        Number.isFinite(r.q95) && r.q95 > 0) {
      scene.line(x, yAxis.place(r.q05), x, yAxis.place(r.q95), POINT);
    }
    scene.circle(x, yAxis.place(r.median), 3.5, POINT);
  }

  const se = Number.isFinite(fit.stderr) ? ` (se ${fmt(fit.stderr, 2)})` : "";
  scene.text(PLOT.x0, PLOT.y1 + 52,
             `config ${sweep.configHash} | ${series.metric} | ` +
             `n_paths ${sweep.nPaths} | ` +
             `slope ${fmt(fit.slope, 3)}${se} | ${slopeSource}`,
             11);
  return scene.render();
}

/**
 * Render every metric of every sweep file in `inputDir` into `outDir`.
 * Returns the written figure paths. Raises MissingDataError when the
 * directory holds no sweep files or a metric has fewer than three eps
 * values (two points always fit a line exactly and show no rate).
 */
export function renderSweep(inputDir: string, outDir: string,
                            format: FigureFormat = "svg"): string[] {
  const bundle = discover(inputDir);
  const sweeps = [...bundle.groups.values()].flatMap((g) => g.sweeps);
  if (sweeps.length === 0) {
    throw new MissingDataError(
      `no sweep result files found in ${inputDir}`);
  }
  const written: string[] = [];
  for (const sweep of sweeps) {
    const stem = basename(sweep.path).replace(/\.csv$/, "");
    for (const series of seriesOf(sweep)) {
      const epsCount = new Set(series.rows.map((r) => r.eps)).size;
      if (epsCount < 3) {
        throw new MissingDataError(
          `${sweep.path}: metric '${series.metric}' has ${epsCount} ` +
          `eps value(s); a rate figure needs at least 3`);
      }
      const drawable = series.rows.filter(
        (r) => Number.isFinite(r.median) && r.median > 0,
      );
      if (drawable.length < 3) {
        console.error(
          `note: skipping '${series.metric}' of ${sweep.path}: ` +
          `medians are not positive, nothing to draw on a log axis`);
        continue;
      }
      const svg = drawMetric(sweep, series);
      written.push(
        writeFigure(outDir, `${stem}-${series.metric}`, format, svg));
    }
  }
  return written;
}
