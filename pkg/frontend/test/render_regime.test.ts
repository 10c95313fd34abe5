import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { basename, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { MissingDataError, SchemaError } from "../src/formats.js";
import { renderRegime } from "../src/render_regime.js";

const FIXTURES = fileURLToPath(new URL("fixtures", import.meta.url));

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "regimefig-"));
}

function fraction(svg: string, sign: "lt" | "gt"): number {
  const tag = sign === "lt" ? "&lt;" : "&gt;";
  const m = svg.match(new RegExp(`frac\\(lam${tag}0\\) = ([^<]+)<`));
  expect(m).not.toBeNull();
  return Number(m![1]);
}

/** A small samples file with every exponent strictly negative. */
function allNegativeDir(): string {
  const dir = mkdtempSync(join(tmpdir(), "allneg-"));
  const header = {
    kind: "ftle-samples", schema_version: 1, artifact_version: "1.0.0",
    config_hash: "0123456789ab", n_samples: 12, case: "stable",
  };
  const lines = [JSON.stringify(header)];
  for (let i = 0; i < 12; i++) {
    lines.push(JSON.stringify({
      stream_id: i, eps: 0.1, horizon_slow: 1.0,
      lam_spde_slow: -1.5 - 0.01 * i, lam_ae_slow: -1.6 - 0.01 * i,
      flags: [],
    }));
  }
  writeFileSync(join(dir, "regime-stable-0123456789ab.jsonl"),
                lines.join("\n") + "\n");
  return dir;
}

describe("renderRegime", () => {
  it("errors on a directory without regime samples", () => {
    expect(() => renderRegime(tmp(), tmp())).toThrow(MissingDataError);
    expect(() => renderRegime(tmp(), tmp())).toThrow(/no regime sample/);
  });

  it("shows the summary fractions for the 30/70 fixture", () => {
    const out = tmp();
    const written = renderRegime(join(FIXTURES, "regime-mixed"), out);
    expect(written).toHaveLength(1);
    expect(basename(written[0])).toBe("regime-unstable-feedc0c0a100.svg");
    const svg = readFileSync(written[0], "utf8");
    expect(fraction(svg, "lt")).toBe(0.3);
    expect(fraction(svg, "gt")).toBe(0.7);
    expect(svg).toContain("config feedc0c0a100");
    expect(svg).toContain("fractions from summary file");
    // the sample range spans zero, so the zero line must be drawn
    expect(svg).toContain('stroke-dasharray="5,4"');
  });

  it("computes fractions itself when no summary is present", () => {
    const out = tmp();
    const written = renderRegime(allNegativeDir(), out);
    const svg = readFileSync(written[0], "utf8");
    expect(fraction(svg, "lt")).toBe(1);
    expect(fraction(svg, "gt")).toBe(0);
    expect(svg).toContain("fractions from sample values");
    // all mass is left of zero; no zero line inside the padded range
    expect(svg).not.toContain('stroke-dasharray="5,4"');
  });

  it("raises a schema error when the exponent column is missing", () => {
    const src = join(FIXTURES, "missing-lambda");
    expect(() => renderRegime(src, tmp())).toThrow(SchemaError);
    expect(() => renderRegime(src, tmp())).toThrow(/lam_spde_slow/);
  });

  it("regenerates byte-identical figures in both formats", () => {
    for (const format of ["svg", "png"] as const) {
      const a = renderRegime(join(FIXTURES, "regime-mixed"), tmp(), format);
      const b = renderRegime(join(FIXTURES, "regime-mixed"), tmp(), format);
      expect(readFileSync(a[0]).equals(readFileSync(b[0]))).toBe(true);
    }
  });
});
