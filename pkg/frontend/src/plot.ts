/**
 * Figure jobs: read a run directory's tables, render one SVG, and write
 * the `.verdict` sidecar whose numbers are recomputed from the table
 * alone.
 */

import { readFileSync, writeFileSync } from "fs";
import { join } from "path";

import { column, readTable, requireColumns, Table } from "./csv.js";
import { renderChart, Series } from "./svg.js";
import {
  fluxFloor,
  formatVerdict,
  logLogSlope,
  monotoneDecreasing,
  nondecreasing,
} from "./verdicts.js";

export type FigureKind = "energy" | "flux" | "sweep" | "fluxprob";

export interface PlotJob {
  kind: FigureKind;
  runDir: string;
  outPath: string;
}

export interface PlotResult {
  svgPath: string;
  verdictPath: string;
  verdict: Record<string, unknown>;
}

interface Manifest {
  constants?: {
    K_inf: number;
    M0: number;
    T0: number;
    sigma0: number;
  };
  config?: { d?: number };
}

function readManifest(runDir: string): Manifest {
  return JSON.parse(readFileSync(join(runDir, "manifest.json"), "utf8"));
}

function uniqueSorted(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}

function medianBy(keys: number[], values: number[], key: number): number {
  const group = values.filter((_, i) => keys[i] === key).sort((a, b) => a - b);
  const mid = Math.floor(group.length / 2);
  return group.length % 2 ? group[mid] : 0.5 * (group[mid - 1] + group[mid]);
}

function energyFigure(runDir: string) {
  const path = join(runDir, "energy.csv");
  const table = readTable(path);
  requireColumns(table, ["t", "F", "D"], path);
  const t = column(table, "t", path);
  const F = column(table, "F", path);
  const D = column(table, "D", path);
  const verdictCore = monotoneDecreasing(t, F);
  const svg = renderChart({
    title: "Free energy decay",
    xLabel: "t",
    yLabel: "F, D",
    series: [
      { label: "free energy F", x: t, y: F },
      { label: "dissipation D", x: t, y: D, dashed: true },
    ],
  });
  return {
    svg,
    verdict: {
      monotone: verdictCore.monotone,
      first_increase_at: verdictCore.firstIncreaseAt,
    },
  };
}

function fluxFigure(runDir: string) {
  const path = join(runDir, "kinetic_diagnostics.csv");
  const table = readTable(path);
  requireColumns(table, ["t", "min_flux"], path);
  const t = column(table, "t", path);
  const minFlux = column(table, "min_flux", path);
  const manifest = readManifest(runDir);
  if (!manifest.constants) {
    throw new Error(`manifest in ${runDir} carries no constants block`);
  }
  const params = {
    j0: minFlux[0],
    kInf: manifest.constants.K_inf,
    m0: manifest.constants.M0,
    t0: manifest.constants.T0,
    sigma0: manifest.constants.sigma0,
    d: manifest.config?.d ?? 2,
    tol: 1e-3,
    expSlack: 5e-3,
  };
  const verdictCore = fluxFloor(t, minFlux, params);
  const linearFloor = t.map((tv) =>
    tv < params.t0 ? params.j0 - params.kInf * params.m0 * tv : NaN,
  );
  const expFloor = t.map(
    (tv) =>
      params.j0 * Math.exp(-(params.d - 1) * params.sigma0 * tv),
  );
  const svg = renderChart({
    title: "Flux norm against its floors",
    xLabel: "t",
    yLabel: "min |J|",
    series: [
      { label: "min |J(t)|", x: t, y: minFlux },
      { label: "linear floor", x: t, y: linearFloor, dashed: true },
      { label: "exponential floor", x: t, y: expFloor, dashed: true },
    ],
  });
  return {
    svg,
    verdict: {
      floor_ok: verdictCore.floorOk,
      floor_violation_at: verdictCore.floorViolationAt,
    },
  };
}

function sweepFigure(runDir: string) {
  const path = join(runDir, "sweep_results.csv");
  const table = readTable(path);
  requireColumns(table, ["N", "sup_t_msd"], path);
  const nCol = column(table, "N", path);
  const msd = column(table, "sup_t_msd", path);
  const ns = uniqueSorted(nCol);
  const medians = ns.map((n) => medianBy(nCol, msd, n));
  const verdictCore = logLogSlope(ns, medians);
  const svg = renderChart({
    title: "Coupling deviation against particle count",
    xLabel: "N",
    yLabel: "median sup_t msd",
    logX: true,
    logY: true,
    series: [
      { label: "eps(N) median", x: ns, y: medians, markers: true },
    ],
  });
  return {
    svg,
    verdict: {
      decreasing: verdictCore.decreasing,
      slope: Number(verdictCore.slope.toFixed(6)),
    },
  };
}

function fluxprobFigure(runDir: string) {
  const path = join(runDir, "fluxprob.csv");
  const table = readTable(path);
  requireColumns(table, ["N", "prob_empirical", "prob_floor"], path);
  const nCol = column(table, "N", path);
  const prob = column(table, "prob_empirical", path);
  const floor = column(table, "prob_floor", path);
  const ns = uniqueSorted(nCol);
  const medians = ns.map((n) => medianBy(nCol, prob, n));
  const floors = ns.map((n) => medianBy(nCol, floor, n));
  const verdictCore = nondecreasing(medians);
  const svg = renderChart({
    title: "Probability of keeping the flux above its floor",
    xLabel: "N",
    yLabel: "P(inf |J| > eps0)",
    logX: true,
    series: [
      { label: "empirical (median)", x: ns, y: medians, markers: true },
      { label: "theoretical floor", x: ns, y: floors, dashed: true },
    ],
  });
  return {
    svg,
    verdict: { nondecreasing: verdictCore.nondecreasing },
  };
}

const FIGURES: Record<FigureKind, (runDir: string) => { svg: string; verdict: Record<string, unknown> }> = {
  energy: energyFigure,
  flux: fluxFigure,
  sweep: sweepFigure,
  fluxprob: fluxprobFigure,
};

export function plot(job: PlotJob): PlotResult {
  const figure = FIGURES[job.kind];
  if (!figure) {
    throw new Error(`unknown figure kind '${job.kind}'`);
  }
  const { svg, verdict } = figure(job.runDir);
  const verdictPath = job.outPath.replace(/\.svg$/, "") + ".verdict";
  writeFileSync(job.outPath, svg);
  writeFileSync(verdictPath, formatVerdict(verdict));
  return { svgPath: job.outPath, verdictPath, verdict };
}
