export {
  MissingDataError,
  SchemaError,
  parseSamplesJsonl,
  parseSweepCsv,
  parseRegimeSummary,
} from "./formats.js";
export type {
  SamplesFile,
  SampleRecord,
  SweepFile,
  SweepRow,
  RegimeSummary,
} from "./formats.js";
export { discover } from "./discover.js";
export type { ReportBundle, HashGroup } from "./discover.js";
export { logLogFit } from "./fit.js";
export { renderSweep } from "./render_sweep.js";
export { renderRegime } from "./render_regime.js";
export { svgToPng, writeFigure } from "./raster.js";
export type { FigureFormat } from "./raster.js";
export { runReport, main } from "./cli.js";
