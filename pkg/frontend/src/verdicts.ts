/**
 * Numeric verdicts recomputed from the tables alone.
 *
 * These mirror the pass/fail flags the simulation side writes to
 * checks.json, so the two can be cross-checked on shared runs; figures
 * stay decorative, the sidecar numbers are the testable artifact.
 */

export interface MonotoneVerdict {
  monotone: boolean;
  firstIncreaseAt: number | null;
}

/** Non-increasing within a relative slack (free-energy decay check). */
export function monotoneDecreasing(
  t: number[],
  values: number[],
  slack = 1e-10,
): MonotoneVerdict {
  for (let i = 1; i < values.length; i++) {
    if (values[i] - values[i - 1] > slack * (1 + Math.abs(values[i - 1]))) {
      return { monotone: false, firstIncreaseAt: t[i] };
    }
  }
  return { monotone: true, firstIncreaseAt: null };
}

export interface FloorParams {
  j0: number; // initial min flux read off the table
  kInf: number;
  m0: number;
  t0: number;
  sigma0: number;
  d: number;
  tol: number; // linear floor slack
  expSlack: number; // exponential floor relative slack
}

export interface FloorVerdict {
  floorOk: boolean;
  floorViolationAt: number | null;
}

/**
 * Linear floor j0 - K_inf M0 t (for t < T0) and the exponential bound
 * |J|^2 >= j0^2 e^{-2 (d-1) sigma0 t} (1 - slack).
 */
export function fluxFloor(
  t: number[],
  minFlux: number[],
  p: FloorParams,
): FloorVerdict {
  for (let i = 0; i < t.length; i++) {
    if (t[i] < p.t0) {
      const floor = p.j0 - p.kInf * p.m0 * t[i] - p.tol;
      if (minFlux[i] < floor) {
        return { floorOk: false, floorViolationAt: t[i] };
      }
    }
    const expFloor =
      p.j0 * p.j0 * Math.exp(-2 * (p.d - 1) * p.sigma0 * t[i]) * (1 - p.expSlack);
    if (minFlux[i] * minFlux[i] < expFloor) {
      return { floorOk: false, floorViolationAt: t[i] };
    }
  }
  return { floorOk: true, floorViolationAt: null };
}

export interface SlopeVerdict {
  decreasing: boolean;
  slope: number; // least-squares slope of log(eps) against log(N)
}

export function logLogSlope(ns: number[], values: number[]): SlopeVerdict {
  if (ns.length < 2) {
    throw new Error("need at least two points for a slope fit");
  }
  const xs = ns.map(Math.log);
  const ys = values.map((v) => Math.log(Math.max(v, 1e-300)));
  const xMean = xs.reduce((a, b) => a + b, 0) / xs.length;
  const yMean = ys.reduce((a, b) => a + b, 0) / ys.length;
  let sxy = 0;
  let sxx = 0;
  for (let i = 0; i < xs.length; i++) {
    sxy += (xs[i] - xMean) * (ys[i] - yMean);
    sxx += (xs[i] - xMean) * (xs[i] - xMean);
  }
  const slope = sxy / sxx;
  const decreasing = values.every((v, i) => i === 0 || v <= values[i - 1]);
  return { decreasing, slope };
}

export interface NondecreasingVerdict {
  nondecreasing: boolean;
}

export function nondecreasing(values: number[]): NondecreasingVerdict {
  return {
    nondecreasing: values.every((v, i) => i === 0 || v >= values[i - 1] - 1e-12),
  };
}

/** Render a verdict object as the sidecar "key: value" lines. */
export function formatVerdict(entries: Record<string, unknown>): string {
  return (
    Object.entries(entries)
      .map(([k, v]) => `${k}: ${v === null ? "none" : String(v)}`)
      .join("\n") + "\n"
  );
}
