/** Tiny deterministic SVG builder (no timestamps, stable attribute order). */

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  children: string[] = [],
  text?: string,
): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? formatNum(v) : esc(v)}"`)
    .join(" ");
  const open = parts.length ? `<${name} ${parts}>` : `<${name}>`;
  if (children.length === 0 && text === undefined) {
    return parts.length ? `<${name} ${parts}/>` : `<${name}/>`;
  }
  const body = text !== undefined ? esc(text) : children.join("");
  return `${open}${body}</${name}>`;
}

export function formatNum(v: number): string {
  const rounded = Math.round(v * 1000) / 1000;
  return Object.is(rounded, -0) ? "0" : String(rounded);
}

export function document(width: number, height: number, children: string[]): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">` +
    children.join("") +
    `</svg>`
  );
}

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

/** Blue-to-red diverging color for a rate in [0, 1]. */
export function rateColor(rate: number): string {
  const r = Math.round(40 + 200 * rate);
  const g = Math.round(60 + 60 * (1 - Math.abs(rate - 0.5) * 2));
  const b = Math.round(40 + 200 * (1 - rate));
  return `rgb(${r},${g},${b})`;
}
