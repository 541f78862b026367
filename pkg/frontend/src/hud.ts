import { Manifest, Stats } from "./types.js";

/** One-line HUD text: frame index, quality, server decode/render timings. */
export function hudLine(
  frame: number,
  quality: number,
  manifest: Manifest | null,
  stats: Stats | null,
): string {
  const total = manifest ? manifest.frame_count : 0;
  const sq = manifest && manifest.qualities[quality] ? manifest.qualities[quality].sq : NaN;
  let timing = "server: -";
  if (stats) {
    const decode = ["entropy", "dequantize", "idct", "other"]
      .map((k) => stats.stages[k]?.mean_ms ?? 0)
      .reduce((a, b) => a + b, 0);
    const render = stats.stages["render"]?.mean_ms ?? 0;
    timing = `server: decode ${decode.toFixed(1)} ms, render ${render.toFixed(1)} ms`;
  }
  return `frame ${frame}/${total ? total - 1 : 0} | quality ${quality}` +
    (Number.isNaN(sq) ? "" : ` (sq=${sq})`) + ` | ${timing}`;
}

/** Percent positions of GOF tick marks along the timeline. */
export function tickPositions(manifest: Manifest): number[] {
  const ticks: number[] = [];
  for (let t = 0; t < manifest.frame_count; t += manifest.gof_length) {
    ticks.push((t / manifest.frame_count) * 100);
  }
  return ticks;
}
