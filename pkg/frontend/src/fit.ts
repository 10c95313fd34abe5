/**
 * Least-squares slope of log(y) against log(x), used only when a sweep
 * file carries no fitted slope of its own. The statistics in the result
 * files are the source of truth; this fit exists so that a figure can
 * still show a rate line for files written without one.
 */

export interface LogLogFit {
  slope: number;
  stderr: number;
}

export function logLogFit(x: number[], y: number[]): LogLogFit {
  if (x.length !== y.length || x.length < 3) {
    throw new Error("log-log fit needs at least 3 paired points");
  }
  if (x.some((v) => v <= 0) || y.some((v) => v <= 0)) {
    throw new Error("log-log fit needs positive data");
  }
  const lx = x.map(Math.log);
  const ly = y.map(Math.log);
  const mx = lx.reduce((a, b) => a + b, 0) / lx.length;
  const my = ly.reduce((a, b) => a + b, 0) / ly.length;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < lx.length; i++) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * ly[i];
  }
  const slope = sxy / sxx;
  let ss = 0;
  for (let i = 0; i < lx.length; i++) {
    const r = ly[i] - (my + slope * (lx[i] - mx));
    ss += r * r;
  }
  const dof = lx.length - 2;
  const stderr = dof > 0 ? Math.sqrt(ss / dof / sxx) : Infinity;
  return { slope, stderr };
}
