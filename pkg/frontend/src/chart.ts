// energy-trace chart geometry: pure mapping from series to SVG polyline
// points, rendered by main.ts

export interface Extent {
  min: number;
  max: number;
}

export function seriesExtent(values: number[]): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!isFinite(min)) return { min: 0, max: 1 };
  if (min === max) return { min: min - 0.5, max: max + 0.5 };
  return { min, max };
}

/** Map a series to "x,y x,y ..." polyline points inside a width x height
 * viewport (y grows downward, so larger values plot higher). */
export function polylinePoints(
  values: number[], width: number, height: number, extent?: Extent,
): string {
  if (values.length === 0) return "";
  const ext = extent ?? seriesExtent(values);
  const span = ext.max - ext.min;
  const dx = values.length > 1 ? width / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = values.length > 1 ? i * dx : width / 2;
      const y = height - ((v - ext.min) / span) * height;
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}
