/** Annotated win-rate heatmap: attacker policies as rows, defender
 * policies as columns, cell text showing the rate. */

import { WinRateMatrix } from "./csv.js";
import { document, rateColor, tag } from "./svg.js";

export interface HeatmapOptions {
  cellSize?: number;
  title?: string;
}

export function renderHeatmap(matrix: WinRateMatrix, options: HeatmapOptions = {}): string {
  const cell = options.cellSize ?? 86;
  const left = 130;
  const top = options.title ? 80 : 56;
  const rows = matrix.attackerLabels.length;
  const cols = matrix.defenderLabels.length;
  const width = left + cols * cell + 24;
  const height = top + rows * cell + 24;
  const children: string[] = [
    tag("rect", { x: 0, y: 0, width, height, fill: "white" }),
  ];
  matrix.defenderLabels.forEach((label, j) => {
    children.push(
      tag(
        "text",
        {
          x: left + j * cell + cell / 2,
          y: top - 10,
          "text-anchor": "middle",
          "font-size": 13,
        },
        [],
        label,
      ),
    );
  });
  matrix.attackerLabels.forEach((label, i) => {
    children.push(
      tag(
        "text",
        {
          x: left - 10,
          y: top + i * cell + cell / 2 + 4,
          "text-anchor": "end",
          "font-size": 13,
        },
        [],
        label,
      ),
    );
    matrix.rates[i].forEach((rate, j) => {
      const x = left + j * cell;
      const y = top + i * cell;
      children.push(
        tag("rect", {
          x,
          y,
          width: cell,
          height: cell,
          fill: rateColor(rate),
          stroke: "#fff",
          "stroke-width": 2,
        }),
        tag(
          "text",
          {
            x: x + cell / 2,
            y: y + cell / 2 + 5,
            "text-anchor": "middle",
            "font-size": 14,
            fill: rate > 0.35 && rate < 0.8 ? "#111" : "#fff",
          },
          [],
          rate.toFixed(3),
        ),
      );
    });
  });
  if (options.title) {
    children.push(
      tag(
        "text",
        { x: width / 2, y: 26, "text-anchor": "middle", "font-size": 15 },
        [],
        options.title,
      ),
    );
  }
  children.push(
    tag(
      "text",
      { x: left + (cols * cell) / 2, y: height - 6, "text-anchor": "middle", "font-size": 12 },
      [],
      "defender policies",
    ),
    tag(
      "text",
      {
        x: 18,
        y: top + (rows * cell) / 2,
        "text-anchor": "middle",
        "font-size": 12,
        transform: `rotate(-90 18 ${top + (rows * cell) / 2})`,
      },
      [],
      "attacker policies",
    ),
  );
  return document(width, height, children);
}
