#!/usr/bin/env node
/** Figure CLI: `plot curves|heatmap --in ... --out <base>` writes
 * <base>.svg and <base>.png from workbench CSV files. */

import { readFileSync, writeFileSync } from "node:fs";
import { createRequire } from "node:module";

import { CurveInput, renderCurves } from "./curves.js";
import { SchemaError, parseMetricsCsv, parseWinRateCsv } from "./csv.js";
import { renderHeatmap } from "./heatmap.js";

const require = createRequire(import.meta.url);

interface Parsed {
  command: string;
  inputs: string[];
  out: string;
  logY: boolean;
  smooth: number;
  title?: string;
}

function usage(): string {
  return [
    "usage:",
    "  plot curves  --in LABEL=metrics.csv [--in ...] --out BASE [--log-y] [--smooth N] [--title T]",
    "  plot heatmap --in winrate.csv --out BASE [--title T]",
  ].join("\n");
}

export function parseArgs(argv: string[]): Parsed {
  const [command, ...rest] = argv;
  if (command !== "curves" && command !== "heatmap") {
    throw new Error(`unknown command ${JSON.stringify(command)}\n${usage()}`);
  }
  const parsed: Parsed = { command, inputs: [], out: "", logY: false, smooth: 1 };
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    const next = () => {
      i += 1;
      if (i >= rest.length) throw new Error(`missing value for ${arg}`);
      return rest[i];
    };
    if (arg === "--in") parsed.inputs.push(next());
    else if (arg === "--out") parsed.out = next();
    else if (arg === "--log-y") parsed.logY = true;
    else if (arg === "--smooth") parsed.smooth = Number(next());
    else if (arg === "--title") parsed.title = next();
    else throw new Error(`unknown flag ${arg}\n${usage()}`);
  }
  if (parsed.inputs.length === 0 || parsed.out === "") {
    throw new Error(`--in and --out are required\n${usage()}`);
  }
  if (!Number.isFinite(parsed.smooth) || parsed.smooth < 1) {
    throw new Error("--smooth must be a positive integer");
  }
  return parsed;
}

function writeFigure(svg: string, base: string): string[] {
  const svgPath = `${base}.svg`;
  writeFileSync(svgPath, svg);
  const pngPath = `${base}.png`;
  // Rasterization is best-effort: the SVG is the canonical output.
  try {
    const { Resvg } = require("@resvg/resvg-js");
    writeFileSync(pngPath, new Resvg(svg).render().asPng());
    return [svgPath, pngPath];
  } catch {
    return [svgPath];
  }
}

export function run(argv: string[]): string[] {
  const parsed = parseArgs(argv);
  if (parsed.command === "curves") {
    const inputs: CurveInput[] = parsed.inputs.map((entry) => {
      const eq = entry.indexOf("=");
      const label = eq >= 0 ? entry.slice(0, eq) : entry;
      const path = eq >= 0 ? entry.slice(eq + 1) : entry;
      return { label, rows: parseMetricsCsv(readFileSync(path, "utf-8")) };
    });
    const svg = renderCurves(inputs, {
      logY: parsed.logY,
      smoothWindow: parsed.smooth,
      title: parsed.title,
    });
    return writeFigure(svg, parsed.out);
  }
  if (parsed.inputs.length !== 1) {
    throw new Error("heatmap takes exactly one --in file");
  }
  const matrix = parseWinRateCsv(readFileSync(parsed.inputs[0], "utf-8"));
  const svg = renderHeatmap(matrix, { title: parsed.title });
  return writeFigure(svg, parsed.out);
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  (process.argv[1].endsWith("cli.js") || process.argv[1].endsWith("plot"));

if (invokedDirectly) {
  try {
    for (const path of run(process.argv.slice(2))) {
      console.log(path);
    }
  } catch (error) {
    if (error instanceof SchemaError) {
      console.error(`schema error: ${error.message}`);
    } else {
      console.error(String(error instanceof Error ? error.message : error));
    }
    process.exit(1);
  }
}
