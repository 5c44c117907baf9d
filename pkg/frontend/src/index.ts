export {
  METRICS_HEADER,
  MetricsRow,
  SchemaError,
  WinRateMatrix,
  parseMetricsCsv,
  parseWinRateCsv,
  smooth,
} from "./csv.js";
export { CurveInput, CurveOptions, renderCurves } from "./curves.js";
export { HeatmapOptions, renderHeatmap } from "./heatmap.js";
export { parseArgs, run } from "./cli.js";
