/**
 * Readers for the result files the simulation package writes.
 *
 * Three kinds are consumed here: ensemble samples as JSONL with a header
 * line, sweep statistics as CSV with commented metadata, and regime
 * summaries as JSON. Every file embeds its kind, schema version and the
 * hash of the config that produced it. The readers validate shape before
 * anything is rendered and report problems as SchemaError with the file
 * and field spelled out.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";
import { z } from "zod";

export class SchemaError extends Error {}
export class MissingDataError extends Error {}

/** JSON null stands for a non-finite float in these files. */
const numberOrNull = z.union([z.number(), z.null()]);

const sampleHeaderSchema = z
  .object({
    kind: z.literal("ftle-samples"),
    schema_version: z.number(),
    artifact_version: z.string(),
    config_hash: z.string(),
    n_samples: z.number(),
    case: z.string().optional(),
    eps: z.number().optional(),
    horizon_slow: z.number().optional(),
    window_exponent: z.number().optional(),
  })
  .passthrough();

const sampleRecordSchema = z
  .object({
    stream_id: z.number(),
    eps: z.number(),
    horizon_slow: z.number(),
    lam_spde_slow: numberOrNull,
    lam_ae_slow: numberOrNull,
    flags: z.array(z.string()),
  })
  .passthrough();

export type SamplesHeader = z.infer<typeof sampleHeaderSchema>;

export interface SampleRecord {
  streamId: number;
  eps: number;
  horizonSlow: number;
  lamSpdeSlow: number;
  lamAeSlow: number;
  flags: string[];
}

export interface SamplesFile {
  path: string;
  header: SamplesHeader;
  records: SampleRecord[];
}

function asFinite(v: number | null): number {
  return v === null ? NaN : v;
}

function reportZod(path: string, context: string, err: z.ZodError): never {
  const first = err.issues[0];
  const where = first.path.length ? ` field '${first.path.join(".")}'` : "";
  throw new SchemaError(`${path}: ${context}${where}: ${first.message}`);
}

export function parseSamplesJsonl(path: string): SamplesFile {
  const lines = readFileSync(path, "utf8")
    .split("\n")
    .filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${path}: empty samples file`);
  }
  let rawHeader: unknown;
  try {
    rawHeader = JSON.parse(lines[0]);
  } catch {
    throw new SchemaError(`${path}: header line is not JSON`);
  }
  const header = sampleHeaderSchema.safeParse(rawHeader);
  if (!header.success) {
    reportZod(path, "sample header", header.error);
  }
  const records: SampleRecord[] = [];
  for (let i = 1; i < lines.length; i++) {
    let raw: unknown;
    try {
      raw = JSON.parse(lines[i]);
    } catch {
      throw new SchemaError(`${path}: line ${i + 1} is not JSON`);
    }
    const rec = sampleRecordSchema.safeParse(raw);
    if (!rec.success) {
      reportZod(path, `sample record on line ${i + 1}`, rec.error);
    }
    records.push({
      streamId: rec.data.stream_id,
      eps: rec.data.eps,
      horizonSlow: rec.data.horizon_slow,
      lamSpdeSlow: asFinite(rec.data.lam_spde_slow),
      lamAeSlow: asFinite(rec.data.lam_ae_slow),
      flags: rec.data.flags,
    });
  }
  return { path, header: header.data, records };
}

// ------------------------------------------------------------- sweep CSV

export const SWEEP_COLUMNS = [
  "eps",
  "metric",
  "median",
  "q05",
  "q95",
  "slope",
  "slope_stderr",
] as const;

export interface SweepRow {
  eps: number;
  metric: string;
  median: number;
  q05: number;
  q95: number;
  slope: number;
  slopeStderr: number;
}

export interface SweepFile {
  path: string;
  configHash: string;
  nPaths: number;
  meta: Record<string, unknown>;
  rows: SweepRow[];
}

function parseCommentHeader(text: string): Map<string, string> {
  const entries = new Map<string, string>();
  for (const ln of text.split("\n")) {
    if (!ln.startsWith("# ")) {
      continue;
    }
    const sep = ln.indexOf(": ");
    if (sep > 2) {
      entries.set(ln.slice(2, sep), ln.slice(sep + 2));
    }
  }
  return entries;
}

function cellToNumber(path: string, row: number, name: string,
                      value: string): number {
  if (value === "") {
    return NaN; // empty cell stands for a non-finite float
  }
  const v = Number(value);
  if (Number.isNaN(v)) {
    throw new SchemaError(
      `${path}: row ${row}: column '${name}' is not a number: '${value}'`);
  }
  return v;
}

export function parseSweepCsv(path: string): SweepFile {
  const text = readFileSync(path, "utf8");
  const comments = parseCommentHeader(text);
  if (comments.get("kind") !== "sweep-result") {
    throw new SchemaError(`${path}: not a sweep result file`);
  }
  const configHash = comments.get("config_hash");
  if (!configHash) {
    throw new SchemaError(`${path}: missing config_hash comment`);
  }
  const nPaths = Number(comments.get("n_paths") ?? "");
  let meta: Record<string, unknown> = {};
  const metaText = comments.get("meta");
  if (metaText) {
    try {
      meta = JSON.parse(metaText) as Record<string, unknown>;
    } catch {
      throw new SchemaError(`${path}: meta comment is not JSON`);
    }
  }
  const parsed = Papa.parse<Record<string, string>>(text, {
    comments: "#",
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new SchemaError(`${path}: csv parse error: ${e.message}`);
  }
  const fields = parsed.meta.fields ?? [];
  if (fields.join(",") !== SWEEP_COLUMNS.join(",")) {
    throw new SchemaError(
      `${path}: unexpected columns '${fields.join(",")}'`);
  }
  const rows: SweepRow[] = parsed.data.map((rec, i) => ({
    eps: cellToNumber(path, i + 1, "eps", rec.eps),
    metric: rec.metric,
    median: cellToNumber(path, i + 1, "median", rec.median),
    q05: cellToNumber(path, i + 1, "q05", rec.q05),
    q95: cellToNumber(path, i + 1, "q95", rec.q95),
    slope: cellToNumber(path, i + 1, "slope", rec.slope),
    slopeStderr: cellToNumber(path, i + 1, "slope_stderr",
                              rec.slope_stderr),
  }));
  return { path, configHash, nPaths, meta, rows };
}

// --------------------------------------------------------- regime summary

const fractionSchema = z.object({
  count: z.number(),
  n: z.number(),
  fraction: z.number(),
  wilson_lo: z.number(),
  wilson_hi: z.number(),
});

const regimeSummarySchema = z
  .object({
    kind: z.literal("regime-summary"),
    config_hash: z.string(),
    case: z.string(),
    eps: z.number(),
    nu: z.number(),
    sigma: z.number(),
    horizon_slow: z.number(),
    n_paths: z.number(),
    fractions: z.record(z.string(), fractionSchema),
    lam_ae_max: numberOrNull,
    blowup_count: z.number(),
    samples_file: z.union([z.string(), z.null()]).optional(),
  })
  .passthrough();

export type RegimeSummary = z.infer<typeof regimeSummarySchema>;

export interface RegimeSummaryFile {
  path: string;
  summary: RegimeSummary;
}

export function parseRegimeSummary(path: string): RegimeSummaryFile {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf8"));
  } catch {
    throw new SchemaError(`${path}: not JSON`);
  }
  const summary = regimeSummarySchema.safeParse(raw);
  if (!summary.success) {
    reportZod(path, "regime summary", summary.error);
  }
  return { path, summary: summary.data };
}
