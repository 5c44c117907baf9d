/** Parsing and validation of the solver workbench's CSV outputs. */

export class SchemaError extends Error {
  readonly line: number;

  constructor(message: string, line: number) {
    super(`line ${line}: ${message}`);
    this.line = line;
  }
}

export interface MetricsRow {
  step: number;
  samples: number;
  lossEstimate: number;
  dualityGap: number | null;
  eta: number;
  tau: number;
  epsilon: number;
  wallclockMs: number | null;
}

export const METRICS_HEADER =
  "step,samples,loss_estimate,duality_gap,eta,tau,epsilon,wallclock_ms";

function parseNumber(field: string, line: number, name: string): number {
  const value = Number(field);
  if (field.trim() === "" || !Number.isFinite(value)) {
    throw new SchemaError(`field ${name} is not a finite number: ${JSON.stringify(field)}`, line);
  }
  return value;
}

function parseOptional(field: string, line: number, name: string): number | null {
  if (field === "") return null;
  return parseNumber(field, line, name);
}

/** Validate a metrics CSV; throws SchemaError with the offending line number. */
export function parseMetricsCsv(text: string): MetricsRow[] {
  const lines = text.split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() === "") {
    throw new SchemaError("empty file", 1);
  }
  if (lines[0] !== METRICS_HEADER) {
    throw new SchemaError(`bad header ${JSON.stringify(lines[0])}`, 1);
  }
  const rows: MetricsRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const raw = lines[i];
    if (raw.trim() === "") continue;
    const lineno = i + 1;
    const fields = raw.split(",");
    if (fields.length !== 8) {
      throw new SchemaError(`expected 8 fields, got ${fields.length}`, lineno);
    }
    rows.push({
      step: parseNumber(fields[0], lineno, "step"),
      samples: parseNumber(fields[1], lineno, "samples"),
      lossEstimate: parseNumber(fields[2], lineno, "loss_estimate"),
      dualityGap: parseOptional(fields[3], lineno, "duality_gap"),
      eta: parseNumber(fields[4], lineno, "eta"),
      tau: parseNumber(fields[5], lineno, "tau"),
      epsilon: parseNumber(fields[6], lineno, "epsilon"),
      wallclockMs: parseOptional(fields[7], lineno, "wallclock_ms"),
    });
  }
  if (rows.length === 0) {
    throw new SchemaError("no data rows", 2);
  }
  return rows;
}

export interface WinRateMatrix {
  attackerLabels: string[];
  defenderLabels: string[];
  rates: number[][];
}

/** Validate a win-rate CSV: labeled rows/columns, every rate in [0, 1]. */
export function parseWinRateCsv(text: string): WinRateMatrix {
  const lines = text.split(/\r?\n/).filter((l, i) => l.trim() !== "" || i === 0);
  if (lines.length === 0 || lines[0].trim() === "") {
    throw new SchemaError("empty file", 1);
  }
  const header = lines[0].split(",");
  if (header.length < 2 || header[0] !== "") {
    throw new SchemaError("header must start with an empty cell then defender labels", 1);
  }
  const defenderLabels = header.slice(1);
  const attackerLabels: string[] = [];
  const rates: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const lineno = i + 1;
    const fields = lines[i].split(",");
    if (fields.length !== defenderLabels.length + 1) {
      throw new SchemaError(
        `expected ${defenderLabels.length + 1} fields, got ${fields.length}`,
        lineno,
      );
    }
    attackerLabels.push(fields[0]);
    const row: number[] = [];
    for (const field of fields.slice(1)) {
      const value = parseNumber(field, lineno, "rate");
      if (value < 0 || value > 1) {
        throw new SchemaError(`rate ${value} outside [0, 1]`, lineno);
      }
      row.push(value);
    }
    rates.push(row);
  }
  if (rates.length === 0) {
    throw new SchemaError("no data rows", 2);
  }
  return { attackerLabels, defenderLabels, rates };
}

/** Centered moving average; window 1 is the identity. */
export function smooth(values: number[], window: number): number[] {
  if (window <= 1) return values.slice();
  const half = Math.floor(window / 2);
  return values.map((_, i) => {
    const lo = Math.max(0, i - half);
    const hi = Math.min(values.length - 1, i + half);
    let sum = 0;
    for (let j = lo; j <= hi; j++) sum += values[j];
    return sum / (hi - lo + 1);
  });
}
