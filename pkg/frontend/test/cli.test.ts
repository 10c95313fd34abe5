import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { MissingDataError } from "../src/formats.js";
import { runReport } from "../src/cli.js";

const FIXTURES = fileURLToPath(new URL("fixtures", import.meta.url));
const ROOT = fileURLToPath(new URL("..", import.meta.url));
const CLI = join(ROOT, "dist", "cli.js");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "report-"));
}

function runCli(args: string[]): { status: number; stdout: string;
                                   stderr: string } {
  try {
    const stdout = execFileSync("node", [CLI, ...args],
                                { encoding: "utf8" });
    return { status: 0, stdout, stderr: "" };
  } catch (err) {
    const e = err as { status: number; stdout: string; stderr: string };
    return { status: e.status, stdout: e.stdout ?? "",
             stderr: e.stderr ?? "" };
  }
}

describe("runReport", () => {
  it("renders a directory that has only regime data", () => {
    const out = tmp();
    const written = runReport({
      in: join(FIXTURES, "regime-mixed"), out, format: "svg",
    });
    expect(written).toHaveLength(1);
    expect(existsSync(written[0])).toBe(true);
  });

  it("renders sweeps and regimes from the sample run", () => {
    const out = tmp();
    const written = runReport({
      in: join(FIXTURES, "sample-run"), out, format: "svg",
    });
    const names = readdirSync(out).sort();
    expect(written.length).toBe(names.length);
    expect(names.some((n) => n.startsWith("sweep-amplitude-"))).toBe(true);
    expect(names.some((n) => n.startsWith("sweep-ftle-rate-"))).toBe(true);
    expect(names.some((n) => n.startsWith("regime-"))).toBe(true);
  });

  it("fails when nothing at all can be drawn", () => {
    expect(() => runReport({ in: tmp(), out: tmp(), format: "svg" }))
      .toThrow(MissingDataError);
  });
});

describe("command line", () => {
  it("writes figures and lists them", () => {
    const out = tmp();
    const res = runCli(["report", "--in",
                        join(FIXTURES, "synthetic-slope"),
                        "--out", out, "--format", "svg"]);
    expect(res.status).toBe(0);
    expect(res.stdout).toContain("1 figure(s) written");
    expect(readdirSync(out)).toHaveLength(1);
  });

  it("supports png output", () => {
    const out = tmp();
    const res = runCli(["report", "--in",
                        join(FIXTURES, "regime-mixed"),
                        "--out", out, "--format", "png"]);
    expect(res.status).toBe(0);
    expect(readdirSync(out)[0].endsWith(".png")).toBe(true);
  });

  it("exits nonzero with a message for an empty input directory", () => {
    const res = runCli(["report", "--in", tmp(), "--out", tmp()]);
    expect(res.status).toBe(1);
    expect(res.stderr).toContain("no sweep result files");
    expect(res.stderr).toContain("no regime sample files");
  });

  it("rejects unknown formats and missing options", () => {
    const bad = runCli(["report", "--in", tmp(), "--out", tmp(),
                        "--format", "gif"]);
    expect(bad.status).not.toBe(0);
    const missing = runCli(["report"]);
    expect(missing.status).not.toBe(0);
    const noCommand = runCli([]);
    expect(noCommand.status).not.toBe(0);
  });
});
