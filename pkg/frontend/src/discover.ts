/**
 * Directory scan: find the result files a report can be built from and
 * group them by the config hash they embed. Inputs are never modified.
 */

import { readdirSync, readFileSync, statSync } from "node:fs";
import { join } from "node:path";
import {
  MissingDataError,
  parseRegimeSummary,
  parseSamplesJsonl,
  parseSweepCsv,
  RegimeSummaryFile,
  SamplesFile,
  SweepFile,
} from "./formats.js";

export interface HashGroup {
  configHash: string;
  sweeps: SweepFile[];
  samples: SamplesFile[];
  regimes: RegimeSummaryFile[];
}

export interface ReportBundle {
  inputDir: string;
  groups: Map<string, HashGroup>;
}

function group(bundle: ReportBundle, hash: string): HashGroup {
  let g = bundle.groups.get(hash);
  if (!g) {
    g = { configHash: hash, sweeps: [], samples: [], regimes: [] };
    bundle.groups.set(hash, g);
  }
  return g;
}

/** First line of a file, without reading the whole thing into memory. */
function firstLine(path: string): string {
  const text = readFileSync(path, "utf8");
  const nl = text.indexOf("\n");
  return nl === -1 ? text : text.slice(0, nl);
}

/** True when the text declares the given kind, whatever the JSON spacing. */
function declaresKind(text: string, kind: string): boolean {
  return new RegExp(`"kind":\\s*"${kind}"`).test(text);
}

/**
 * Scan a directory for result files. Files of other kinds (trajectories,
 * config snapshots, an index.json, stray notes) are skipped; files that
 * look like result files but fail validation raise a SchemaError so that
 * a corrupted input is not silently dropped from the report.
 */
export function discover(inputDir: string): ReportBundle {
  let names: string[];
  try {
    names = readdirSync(inputDir).sort();
  } catch {
    throw new MissingDataError(`cannot read input directory ${inputDir}`);
  }
  const bundle: ReportBundle = { inputDir, groups: new Map() };
  for (const name of names) {
    const path = join(inputDir, name);
    if (!statSync(path).isFile()) {
      continue;
    }
    if (name.endsWith(".csv")) {
      if (!firstLine(path).startsWith("# kind: sweep-result")) {
        continue;
      }
      const sweep = parseSweepCsv(path);
      group(bundle, sweep.configHash).sweeps.push(sweep);
    } else if (name.endsWith(".jsonl")) {
      if (!declaresKind(firstLine(path), "ftle-samples")) {
        continue;
      }
      const samples = parseSamplesJsonl(path);
      group(bundle, samples.header.config_hash).samples.push(samples);
    } else if (name.endsWith(".json") && name !== "index.json") {
      if (!declaresKind(readFileSync(path, "utf8"), "regime-summary")) {
        continue;
      }
      const regime = parseRegimeSummary(path);
      group(bundle, regime.summary.config_hash).regimes.push(regime);
    }
  }
  return bundle;
}
