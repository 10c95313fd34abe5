/**
 * Figure output: SVG as text, PNG through resvg with a pinned font setup.
 *
 * System font discovery is disabled so that rasterization cannot depend
 * on whatever happens to be installed; the known font directory is used
 * only if it exists, and the same machine therefore always produces the
 * same bytes.
 */

import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { Resvg } from "@resvg/resvg-js";

const FONT_DIRS = ["/usr/share/fonts/truetype/dejavu"].filter((d) =>
  existsSync(d),
);

export type FigureFormat = "svg" | "png";

export function svgToPng(svg: string): Buffer {
  const resvg = new Resvg(svg, {
    font: {
      loadSystemFonts: false,
      fontDirs: FONT_DIRS,
      defaultFontFamily: "DejaVu Sans",
    },
  });
  return resvg.render().asPng();
}

/** Write one figure and return its path. */
export function writeFigure(outDir: string, stem: string,
                            format: FigureFormat, svg: string): string {
  mkdirSync(outDir, { recursive: true });
  const path = join(outDir, `${stem}.${format}`);
  if (format === "svg") {
    writeFileSync(path, svg);
  } else {
    writeFileSync(path, svgToPng(svg));
  }
  return path;
}
