/** CLI: render one figure kind from a run directory. */

import { plot, FigureKind } from "./plot.js";

const KINDS: FigureKind[] = ["energy", "flux", "sweep", "fluxprob"];

function usage(): never {
  console.error("usage: node dist/main.js <energy|flux|sweep|fluxprob> <runDir> <out.svg>");
  process.exit(2);
}

const [kind, runDir, outPath] = process.argv.slice(2);
if (!kind || !runDir || !outPath || !KINDS.includes(kind as FigureKind)) {
  usage();
}
try {
  const result = plot({ kind: kind as FigureKind, runDir, outPath });
  console.log(`wrote ${result.svgPath} and ${result.verdictPath}`);
  for (const [k, v] of Object.entries(result.verdict)) {
    console.log(`  ${k}: ${v ?? "none"}`);
  }
} catch (err) {
  console.error(String(err));
  process.exit(1);
}
