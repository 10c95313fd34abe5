import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { basename, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { MissingDataError } from "../src/formats.js";
import { renderSweep } from "../src/render_sweep.js";

const FIXTURES = fileURLToPath(new URL("fixtures", import.meta.url));

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "sweepfig-"));
}

function annotatedSlope(svg: string): number {
  const m = svg.match(/>slope ([^<]+)</);
  expect(m).not.toBeNull();
  return Number(m![1].replace(" e", "e"));
}

describe("renderSweep", () => {
  it("errors on a directory without sweep files", () => {
    const empty = tmp();
    expect(() => renderSweep(empty, tmp())).toThrow(MissingDataError);
    expect(() => renderSweep(empty, tmp())).toThrow(/no sweep result/);
  });

  it("refuses a metric with a single eps value", () => {
    const src = join(FIXTURES, "single-eps");
    expect(() => renderSweep(src, tmp())).toThrow(MissingDataError);
    expect(() => renderSweep(src, tmp())).toThrow(/at least 3/);
  });

  it("annotates the synthetic fixture with slope 1.00 +- 0.01", () => {
    const out = tmp();
    const written = renderSweep(join(FIXTURES, "synthetic-slope"), out);
    expect(written).toHaveLength(1);
    expect(basename(written[0])).toBe(
      "sweep-synthetic-a1b2c3d4e5f6-synthetic_rate.svg");
    const svg = readFileSync(written[0], "utf8");
    expect(Math.abs(annotatedSlope(svg) - 1.0)).toBeLessThanOrEqual(0.01);
    expect(svg).toContain("config a1b2c3d4e5f6");
    expect(svg).toContain("slope fit of medians for display");
  });

  it("regenerates byte-identical svg figures", () => {
    const out1 = tmp();
    const out2 = tmp();
    const first = renderSweep(join(FIXTURES, "synthetic-slope"), out1);
    const second = renderSweep(join(FIXTURES, "synthetic-slope"), out2);
    expect(first.map((p) => basename(p)))
      .toEqual(second.map((p) => basename(p)));
    for (let i = 0; i < first.length; i++) {
      expect(readFileSync(first[i], "utf8"))
        .toBe(readFileSync(second[i], "utf8"));
    }
  });

  it("regenerates byte-identical png figures", () => {
    const out1 = tmp();
    const out2 = tmp();
    const first = renderSweep(join(FIXTURES, "synthetic-slope"), out1, "png");
    const second = renderSweep(
      join(FIXTURES, "synthetic-slope"), out2, "png");
    expect(first).toHaveLength(1);
    expect(first[0].endsWith(".png")).toBe(true);
    const a = readFileSync(first[0]);
    const b = readFileSync(second[0]);
    expect(a.length).toBeGreaterThan(1000);
    expect(a.equals(b)).toBe(true);
  });
});
