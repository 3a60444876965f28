/**
 * Deterministic SVG line charts: fixed size, fixed palette, no
 * randomness, so rendered bytes are reproducible run to run.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
  dashed?: boolean;
  markers?: boolean;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logX?: boolean;
  logY?: boolean;
}

const WIDTH = 720;
const HEIGHT = 480;
const MARGIN = { left: 72, right: 24, top: 40, bottom: 56 };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

function fmt(v: number): string {
  if (!Number.isFinite(v)) return "nan";
  const a = Math.abs(v);
  if (a !== 0 && (a < 1e-3 || a >= 1e4)) return v.toExponential(2);
  return Number(v.toPrecision(6)).toString();
}

interface Scale {
  (v: number): number;
  ticks: number[];
}

function makeScale(
  values: number[],
  range: [number, number],
  log: boolean,
): Scale {
  const finite = values.filter((v) => Number.isFinite(v) && (!log || v > 0));
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  if (log) {
    const llo = Math.log10(lo);
    const lhi = Math.log10(hi);
    const scale = ((v: number) =>
      range[0] +
      ((Math.log10(v) - llo) / (lhi - llo)) * (range[1] - range[0])) as Scale;
    const ticks: number[] = [];
    for (let e = Math.floor(llo); e <= Math.ceil(lhi); e++) {
      const t = Math.pow(10, e);
      if (t >= lo / 1.001 && t <= hi * 1.001) ticks.push(t);
    }
    scale.ticks = ticks.length >= 2 ? ticks : [lo, hi];
    return scale;
  }
  const pad = 0.05 * (hi - lo);
  const a = lo - pad;
  const b = hi + pad;
  const scale = ((v: number) =>
    range[0] + ((v - a) / (b - a)) * (range[1] - range[0])) as Scale;
  const n = 5;
  scale.ticks = Array.from({ length: n + 1 }, (_, i) => a + ((b - a) * i) / n);
  return scale;
}

export function renderChart(spec: ChartSpec): string {
  const xs = spec.series.flatMap((s) => s.x);
  const ys = spec.series.flatMap((s) => s.y);
  const sx = makeScale(xs, [MARGIN.left, WIDTH - MARGIN.right], !!spec.logX);
  const sy = makeScale(ys, [HEIGHT - MARGIN.bottom, MARGIN.top], !!spec.logY);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
    `<text x="${WIDTH / 2}" y="22" text-anchor="middle" font-size="16">${spec.title}</text>`,
  );
  // axes
  parts.push(
    `<line x1="${MARGIN.left}" y1="${HEIGHT - MARGIN.bottom}" x2="${WIDTH - MARGIN.right}" y2="${HEIGHT - MARGIN.bottom}" stroke="black"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${HEIGHT - MARGIN.bottom}" stroke="black"/>`,
  );
  for (const t of sx.ticks) {
    const px = sx(t);
    parts.push(
      `<line x1="${px.toFixed(2)}" y1="${HEIGHT - MARGIN.bottom}" x2="${px.toFixed(2)}" y2="${HEIGHT - MARGIN.bottom + 5}" stroke="black"/>`,
      `<text x="${px.toFixed(2)}" y="${HEIGHT - MARGIN.bottom + 20}" text-anchor="middle" font-size="11">${fmt(t)}</text>`,
    );
  }
  for (const t of sy.ticks) {
    const py = sy(t);
    parts.push(
      `<line x1="${MARGIN.left - 5}" y1="${py.toFixed(2)}" x2="${MARGIN.left}" y2="${py.toFixed(2)}" stroke="black"/>`,
      `<text x="${MARGIN.left - 8}" y="${(py + 4).toFixed(2)}" text-anchor="end" font-size="11">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="13">${spec.xLabel}</text>`,
    `<text x="18" y="${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${(MARGIN.top + HEIGHT - MARGIN.bottom) / 2})">${spec.yLabel}</text>`,
  );
  // series
  spec.series.forEach((s, idx) => {
    const color = s.color ?? PALETTE[idx % PALETTE.length];
    const pts: string[] = [];
    for (let i = 0; i < s.x.length; i++) {
      const xv = s.x[i];
      const yv = s.y[i];
      if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
      if ((spec.logX && xv <= 0) || (spec.logY && yv <= 0)) continue;
      pts.push(`${sx(xv).toFixed(2)},${sy(yv).toFixed(2)}`);
    }
    const dash = s.dashed ? ' stroke-dasharray="6 4"' : "";
    if (pts.length > 1) {
      parts.push(
        `<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="1.5"${dash}/>`,
      );
    }
    if (s.markers) {
      for (const p of pts) {
        const [px, py] = p.split(",");
        parts.push(`<circle cx="${px}" cy="${py}" r="3" fill="${color}"/>`);
      }
    }
    const ly = MARGIN.top + 16 * idx;
    parts.push(
      `<line x1="${WIDTH - 190}" y1="${ly}" x2="${WIDTH - 166}" y2="${ly}" stroke="${color}" stroke-width="1.5"${dash}/>`,
      `<text x="${WIDTH - 160}" y="${ly + 4}" font-size="12">${s.label}</text>`,
    );
  });
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
