/** Training-curve figure: one line per run, samples on the x axis. */

import { MetricsRow, smooth } from "./csv.js";
import { PALETTE, document, formatNum, tag } from "./svg.js";

export interface CurveInput {
  label: string;
  rows: MetricsRow[];
}

export interface CurveOptions {
  width?: number;
  height?: number;
  logY?: boolean;
  smoothWindow?: number;
  title?: string;
}

interface Series {
  label: string;
  xs: number[];
  ys: number[];
}

/**
 * Pick the y series for a run: the exact duality gap when any row carries
 * one, otherwise the loss estimate (with an annotated y label).
 */
function extractSeries(inputs: CurveInput[]): { series: Series[]; yLabel: string } {
  const anyGap = inputs.some((inp) => inp.rows.some((r) => r.dualityGap !== null));
  const series = inputs.map((inp) => {
    const rows = anyGap ? inp.rows.filter((r) => r.dualityGap !== null) : inp.rows;
    return {
      label: inp.label,
      xs: rows.map((r) => r.samples),
      ys: rows.map((r) => (anyGap ? (r.dualityGap as number) : r.lossEstimate)),
    };
  });
  return { series, yLabel: anyGap ? "duality gap" : "loss estimate" };
}

export function renderCurves(inputs: CurveInput[], options: CurveOptions = {}): string {
  if (inputs.length === 0) {
    throw new Error("at least one metrics input is required");
  }
  const width = options.width ?? 760;
  const height = options.height ?? 480;
  const margin = { left: 70, right: 20, top: 34, bottom: 48 };
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const window = options.smoothWindow ?? 1;

  const { series, yLabel } = extractSeries(inputs);
  for (const s of series) {
    s.ys = smooth(s.ys, window);
  }
  const logY = options.logY ?? false;
  const floor = 1e-12;
  const allX = series.flatMap((s) => s.xs);
  const allY = series.flatMap((s) => s.ys).map((y) => (logY ? Math.max(y, floor) : y));
  const xMax = Math.max(...allX, 1);
  const xMin = 0;
  let yMin = Math.min(...allY);
  let yMax = Math.max(...allY);
  if (logY) {
    yMin = Math.log10(Math.max(yMin, floor));
    yMax = Math.log10(Math.max(yMax, floor));
  }
  if (yMax - yMin < 1e-12) {
    yMax = yMin + 1;
  }

  const sx = (x: number) => margin.left + ((x - xMin) / (xMax - xMin || 1)) * plotW;
  const sy = (y: number) => {
    const v = logY ? Math.log10(Math.max(y, floor)) : y;
    return margin.top + plotH - ((v - yMin) / (yMax - yMin)) * plotH;
  };

  const children: string[] = [
    tag("rect", { x: 0, y: 0, width, height, fill: "white" }),
    tag("rect", {
      x: margin.left,
      y: margin.top,
      width: plotW,
      height: plotH,
      fill: "none",
      stroke: "#333",
      "stroke-width": 1,
    }),
  ];

  // Axis ticks: four x ticks, five y ticks.
  for (let i = 0; i <= 4; i++) {
    const x = xMin + ((xMax - xMin) * i) / 4;
    const px = sx(x);
    children.push(
      tag("line", { x1: px, y1: margin.top + plotH, x2: px, y2: margin.top + plotH + 5, stroke: "#333" }),
      tag(
        "text",
        { x: px, y: margin.top + plotH + 20, "text-anchor": "middle", "font-size": 11 },
        [],
        formatTick(x),
      ),
    );
  }
  for (let i = 0; i <= 4; i++) {
    const v = yMin + ((yMax - yMin) * i) / 4;
    const py = margin.top + plotH - (plotH * i) / 4;
    const labelVal = logY ? Math.pow(10, v) : v;
    children.push(
      tag("line", { x1: margin.left - 5, y1: py, x2: margin.left, y2: py, stroke: "#333" }),
      tag(
        "text",
        { x: margin.left - 8, y: py + 4, "text-anchor": "end", "font-size": 11 },
        [],
        formatTick(labelVal),
      ),
    );
  }

  series.forEach((s, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const points = s.xs.map((x, i) => `${formatNum(sx(x))},${formatNum(sy(s.ys[i]))}`).join(" ");
    children.push(
      tag("polyline", { points, fill: "none", stroke: color, "stroke-width": 1.8 }),
    );
    const ly = margin.top + 16 + idx * 16;
    children.push(
      tag("line", {
        x1: margin.left + plotW - 130,
        y1: ly - 4,
        x2: margin.left + plotW - 104,
        y2: ly - 4,
        stroke: color,
        "stroke-width": 2,
      }),
      tag(
        "text",
        { x: margin.left + plotW - 98, y: ly, "font-size": 12 },
        [],
        s.label,
      ),
    );
  });

  children.push(
    tag(
      "text",
      { x: margin.left + plotW / 2, y: height - 12, "text-anchor": "middle", "font-size": 13 },
      [],
      "samples",
    ),
    tag(
      "text",
      {
        x: 16,
        y: margin.top + plotH / 2,
        "text-anchor": "middle",
        "font-size": 13,
        transform: `rotate(-90 16 ${margin.top + plotH / 2})`,
      },
      [],
      yLabel + (logY ? " (log)" : ""),
    ),
  );
  if (options.title) {
    children.push(
      tag(
        "text",
        { x: width / 2, y: 20, "text-anchor": "middle", "font-size": 15 },
        [],
        options.title,
      ),
    );
  }
  return document(width, height, children);
}

function formatTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 10000 || abs < 0.01) return v.toExponential(1);
  return String(Math.round(v * 1000) / 1000);
}
