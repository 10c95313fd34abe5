#!/usr/bin/env node
/**
 * Batch report tool: read a directory of result files, write figures.
 *
 *   report --in results/ --out figures/ --format svg
 *
 * Sweep figures and regime figures are both attempted; the run fails
 * only when neither finds anything to draw, and schema problems in
 * recognized files always fail.
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { MissingDataError, SchemaError } from "./formats.js";
import { FigureFormat } from "./raster.js";
import { renderRegime } from "./render_regime.js";
import { renderSweep } from "./render_sweep.js";

export interface ReportArgs {
  in: string;
  out: string;
  format: FigureFormat;
}

/** Run both renderers; returns the written paths. */
export function runReport(args: ReportArgs): string[] {
  const written: string[] = [];
  const skipped: string[] = [];
  for (const render of [renderSweep, renderRegime]) {
    try {
      written.push(...render(args.in, args.out, args.format));
    } catch (err) {
      if (err instanceof MissingDataError) {
        skipped.push(err.message);
      } else {
        throw err;
      }
    }
  }
  if (written.length === 0) {
    throw new MissingDataError(skipped.join("; "));
  }
  for (const message of skipped) {
    console.error(`note: ${message}`);
  }
  return written;
}

export function main(argv: string[]): Promise<unknown> {
  return yargs(argv)
    .command(
      "report",
      "render figures from a directory of result files",
      (y) =>
        y
          .option("in", {
            type: "string",
            demandOption: true,
            describe: "directory holding result files",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "directory figures are written into",
          })
          .option("format", {
            choices: ["png", "svg"] as const,
            default: "svg" as FigureFormat,
            describe: "figure file format",
          }),
      (args) => {
        const written = runReport({
          in: args.in,
          out: args.out,
          format: args.format,
        });
        for (const path of written) {
          console.log(path);
        }
        console.log(`${written.length} figure(s) written`);
      },
    )
    .demandCommand(1, "specify a command, e.g. report")
    .strict()
    .fail((msg, err) => {
      if (err instanceof MissingDataError || err instanceof SchemaError) {
        console.error(`error: ${err.message}`);
        process.exit(1);
      }
      if (err) {
        throw err;
      }
      console.error(`error: ${msg}`);
      process.exit(2);
    })
    .parseAsync();
}

const isDirectRun =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isDirectRun) {
  void main(hideBin(process.argv));
}
