/**
 * Regime figures: a histogram of the per-path exponents of the full
 * model with a zero line and the negative/positive sign fractions in the
 * corner. When the matching regime summary file is present its exact
 * fractions are displayed; otherwise they are recomputed from the sample
 * values for display.
 */

import { basename } from "node:path";
import { discover } from "./discover.js";
import {
  MissingDataError,
  RegimeSummary,
  SamplesFile,
} from "./formats.js";
import { FigureFormat, writeFigure } from "./raster.js";
import { Axis, fmt, linearTicks, padLinear, PLOT, Scene } from "./svg.js";

const BAR = "#4878a8";
const ZERO = "#c23b22";
const AXIS = "#1a1a1a";
const GRID = "#d8d8d8";

const N_BINS = 24;

interface Fractions {
  negative: number;
  positive: number;
  source: string;
}

function fractionsFor(values: number[],
                      summary?: RegimeSummary): Fractions {
  if (summary) {
    return {
      negative: summary.fractions["spde_negative"]?.fraction ?? NaN,
      positive: summary.fractions["spde_positive"]?.fraction ?? NaN,
      source: "fractions from summary file",
    };
  }
  const n = values.length;
  return {
    negative: n ? values.filter((v) => v < 0).length / n : NaN,
    positive: n ? values.filter((v) => v > 0).length / n : NaN,
    source: "fractions from sample values",
  };
}

function histogram(values: number[]): { edges: number[]; counts: number[] } {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    // all paths coincide (the deterministic regime): one populated bin
    const step = Math.max(Math.abs(lo) * 0.05, 0.05);
    lo -= step;
    hi += step;
  }
  const edges: number[] = [];
  for (let i = 0; i <= N_BINS; i++) {
    edges.push(lo + ((hi - lo) * i) / N_BINS);
  }
  const counts = new Array<number>(N_BINS).fill(0);
  for (const v of values) {
    let k = Math.floor(((v - lo) / (hi - lo)) * N_BINS);
    if (k === N_BINS) {
      k = N_BINS - 1; // right edge belongs to the last bin
    }
    counts[k] += 1;
  }
  return { edges, counts };
}

function drawRegime(file: SamplesFile, values: number[],
                    fracs: Fractions): string {
  const kase = file.header.case ?? "unknown";
  const { edges, counts } = histogram(values);
  const [xLo, xHi] = padLinear(edges[0], edges[edges.length - 1]);
  const maxCount = Math.max(...counts);
  const xAxis = new Axis(xLo, xHi, PLOT.x0, PLOT.x1, false);
  const yAxis = new Axis(0, maxCount * 1.08, PLOT.y1, PLOT.y0, false);

  const scene = new Scene();
  scene.text((PLOT.x0 + PLOT.x1) / 2, PLOT.y0 - 16,
             `exponent distribution, ${kase} regime`, 15, "middle");

  for (const tick of linearTicks(0, maxCount, 5)) {
    const rounded = Math.round(tick);
    const y = yAxis.place(rounded);
    scene.line(PLOT.x0, y, PLOT.x1, y, GRID);
    scene.text(PLOT.x0 - 8, y + 4, String(rounded), 11, "end");
  }
  for (const tick of linearTicks(xLo, xHi, 6)) {
    const x = xAxis.place(tick);
    scene.line(x, PLOT.y1, x, PLOT.y1 + 5, AXIS);
    scene.text(x, PLOT.y1 + 20, fmt(tick, 3), 11, "middle");
  }
  scene.line(PLOT.x0, PLOT.y1, PLOT.x1, PLOT.y1, AXIS);
  scene.line(PLOT.x0, PLOT.y0, PLOT.x0, PLOT.y1, AXIS);
  scene.text((PLOT.x0 + PLOT.x1) / 2, PLOT.y1 + 38,
             "finite-time exponent (slow scale)", 12, "middle");

  for (let i = 0; i < counts.length; i++) {
    if (counts[i] === 0) {
      continue;
    }
    const x0 = xAxis.place(edges[i]);
    const x1 = xAxis.place(edges[i + 1]);
    const yTop = yAxis.place(counts[i]);
    scene.rect(x0 + 0.5, yTop, x1 - x0 - 1.0, PLOT.y1 - yTop, BAR);
  }

  if (xLo < 0 && xHi > 0) {
    const xZero = xAxis.place(0);
    scene.line(xZero, PLOT.y0, xZero, PLOT.y1, ZERO, 1.5, "5,4");
    scene.text(xZero + 5, PLOT.y0 + 12, "0", 12, "start", ZERO);
  }

  scene.text(PLOT.x1 - 6, PLOT.y0 + 16,
             `frac(lam<0) = ${fmt(fracs.negative, 3)}`, 13, "end");
  scene.text(PLOT.x1 - 6, PLOT.y0 + 34,
             `frac(lam>0) = ${fmt(fracs.positive, 3)}`, 13, "end");

  scene.text(PLOT.x0, PLOT.y1 + 52,
             `config ${file.header.config_hash} | case ${kase} | ` +
             `n ${values.length} | ${fracs.source}`,
             11);
  return scene.render();
}

/**
 * Render one exponent histogram per regime sample file in `inputDir`.
 * Sample files tag themselves with the regime case in their header; files
 * without a case (plain FTLE ensembles) are not regime figures. Raises
 * MissingDataError when there is nothing to draw.
 */
export function renderRegime(inputDir: string, outDir: string,
                             format: FigureFormat = "svg"): string[] {
  const bundle = discover(inputDir);
  const written: string[] = [];
  let found = 0;
  for (const group of bundle.groups.values()) {
    for (const file of group.samples) {
      const kase = file.header.case;
      if (!kase) {
        continue;
      }
      found += 1;
      const values = file.records
        .map((r) => r.lamSpdeSlow)
        .filter((v) => Number.isFinite(v));
      if (values.length === 0) {
        throw new MissingDataError(
          `${file.path}: no finite exponent values to draw`);
      }
      const summary = group.regimes.find(
        (r) => r.summary.case === kase)?.summary;
      const svg = drawRegime(file, values, fractionsFor(values, summary));
      const stem = basename(file.path).replace(/\.jsonl$/, "");
      written.push(writeFigure(outDir, stem, format, svg));
    }
  }
  if (found === 0) {
    throw new MissingDataError(
      `no regime sample files found in ${inputDir}`);
  }
  return written;
}
