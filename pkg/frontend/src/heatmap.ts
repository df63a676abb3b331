/** Activation-grid display math: min-max normalization, corner-aligned
 * bilinear resize, a small blue-to-red colormap, and canvas overlay drawing.
 * Pure display work; every score comes from the service payload. */

import { CamPayload } from './types.js';

/** Min-max rescale to [0, 1]; a constant grid maps to all zeros. */
export function normalizeGrid(values: number[]): number[] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) return values.map(() => 0);
  return values.map((v) => (v - lo) / (hi - lo));
}

/** Corner-aligned bilinear interpolation of a row-major h x w grid. */
export function bilinearResize(
  values: number[],
  h: number,
  w: number,
  outH: number,
  outW: number,
): number[] {
  const at = (y: number, x: number) => values[y * w + x];
  const out = new Array<number>(outH * outW);
  for (let i = 0; i < outH; i++) {
    const sy = outH === 1 ? 0 : (i * (h - 1)) / (outH - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, h - 1);
    const fy = sy - y0;
    for (let j = 0; j < outW; j++) {
      const sx = outW === 1 ? 0 : (j * (w - 1)) / (outW - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, w - 1);
      const fx = sx - x0;
      const top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
      const bottom = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
      out[i * outW + j] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

/** t in [0,1] -> [r,g,b]: blue, cyan, yellow, red. */
export function heatColor(t: number): [number, number, number] {
  const clamped = Math.max(0, Math.min(1, t));
  const r = Math.min(1, Math.max(0, 3 * clamped - 1.5));
  const g = Math.min(1, Math.max(0, 1.5 - Math.abs(2 * clamped - 1) * 1.5 + 0.5));
  const b = Math.min(1, Math.max(0, 1.5 - 3 * clamped));
  return [Math.round(r * 255), Math.round(g * 255), Math.round(b * 255)];
}

/** Paint the grid over whatever the canvas already shows, alpha-blended. */
export function drawCamOverlay(canvas: HTMLCanvasElement, cam: CamPayload, alpha = 0.45): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const normalized = normalizeGrid(cam.values);
  const scaled = bilinearResize(normalized, cam.h, cam.w, canvas.height, canvas.width);
  const overlay = ctx.createImageData(canvas.width, canvas.height);
  for (let i = 0; i < scaled.length; i++) {
    const [r, g, b] = heatColor(scaled[i]);
    overlay.data[4 * i] = r;
    overlay.data[4 * i + 1] = g;
    overlay.data[4 * i + 2] = b;
    overlay.data[4 * i + 3] = Math.round(alpha * 255);
  }
  const previous = ctx.globalCompositeOperation;
  ctx.save();
  // ImageData ignores alpha compositing when put directly, so blend by hand
  // through a temporary canvas drawImage when available; fall back to direct.
  const scratch = canvas.ownerDocument.createElement('canvas');
  scratch.width = canvas.width;
  scratch.height = canvas.height;
  const sctx = scratch.getContext('2d');
  if (sctx) {
    sctx.putImageData(overlay, 0, 0);
    ctx.globalAlpha = 1.0;
    ctx.drawImage(scratch, 0, 0);
  } else {
    ctx.putImageData(overlay, 0, 0);
  }
  ctx.restore();
  ctx.globalCompositeOperation = previous;
}
