// Pure rendering model: everything the canvas painter needs, computed as
// plain data so unit tests cover geometry without pixels.
//
// The CoP plane is the robot frame, X in [-2, 2] and Y in [-1, 1], drawn
// with one shared pixels-per-unit scale: the plotted region is twice as
// wide as tall (the 2:1 X:Y presentation).

import { StateFrame } from './protocol.js';

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface CopLayout {
  scale: number; // pixels per robot-frame unit, same for X and Y
  originX: number; // pixel position of robot-frame (0, 0)
  originY: number;
}

export function copLayout(view: Viewport): CopLayout {
  const usableW = view.width - 2 * view.margin;
  const usableH = view.height - 2 * view.margin;
  const scale = Math.min(usableW / 4, usableH / 2);
  return {
    scale,
    originX: view.width / 2,
    originY: view.height / 2,
  };
}

/** Robot-frame point to canvas pixels. Affine, equal scale on both axes,
 *  screen Y grows downward. */
export function copToPixel(layout: CopLayout, x: number, y: number): [number, number] {
  return [layout.originX + layout.scale * x, layout.originY - layout.scale * y];
}

export interface FootBox {
  foot: 'left' | 'right';
  x: number; // top-left pixel
  y: number;
  width: number;
  height: number;
}

/** Both foot outlines: each spans 2x2 robot-frame units around its center
 *  at X = -1 / +1. */
export function footBoxes(layout: CopLayout): FootBox[] {
  return (['left', 'right'] as const).map((foot) => {
    const cx = foot === 'left' ? -1 : 1;
    const [px, py] = copToPixel(layout, cx - 1, 1);
    return { foot, x: px, y: py, width: 2 * layout.scale, height: 2 * layout.scale };
  });
}

export interface CellLabel {
  foot: 'left' | 'right';
  cell: number;
  grams: number;
  x: number;
  y: number;
}

// pad corners in foot-local coordinates, cell order FL, FR, BL, BR
const PAD_LOCAL: Array<[number, number]> = [
  [-1, 1],
  [1, 1],
  [-1, -1],
  [1, -1],
];

/** Per-cell force labels at the pad corners of both feet. */
export function cellLabels(layout: CopLayout, frame: StateFrame): CellLabel[] {
  const labels: CellLabel[] = [];
  for (let i = 0; i < 8; i++) {
    const foot = i < 4 ? 'left' : 'right';
    const cell = i % 4;
    const offset = foot === 'left' ? -1 : 1;
    const [lx, ly] = PAD_LOCAL[cell];
    const [px, py] = copToPixel(layout, offset + 0.82 * lx, 0.82 * ly);
    labels.push({ foot, cell, grams: frame.per_cell_g[i], x: px, y: py });
  }
  return labels;
}

export interface CopView {
  dot: [number, number] | null; // null while the robot reads lifted
  setpoint: [number, number] | null;
  feet: FootBox[];
  cells: CellLabel[];
  fallBanner: boolean;
  staleBadge: boolean;
  support: string;
}

export function renderCopView(
  layout: CopLayout,
  frame: StateFrame,
  stale: boolean,
): CopView {
  const lifted = frame.f_total_g < 20 && frame.cop_x === 0 && frame.cop_y === 0;
  return {
    dot: lifted ? null : copToPixel(layout, frame.cop_x, frame.cop_y),
    setpoint: frame.setpoint
      ? copToPixel(layout, frame.setpoint.x, frame.setpoint.y)
      : null,
    feet: footBoxes(layout),
    cells: cellLabels(layout, frame),
    fallBanner: frame.fallen !== 0,
    staleBadge: stale,
    support: frame.support,
  };
}

// -- strip charts -------------------------------------------------------------

export interface StripSample {
  t_ms: number;
  value: number;
}

/** Rolling time window of (t, value) samples for the strip charts. */
export class StripBuffer {
  private samples: StripSample[] = [];

  constructor(public windowMs = 30_000) {}

  push(t_ms: number, value: number): void {
    this.samples.push({ t_ms, value });
    const cutoff = t_ms - this.windowMs;
    let drop = 0;
    while (drop < this.samples.length && this.samples[drop].t_ms < cutoff) drop++;
    if (drop > 0) this.samples.splice(0, drop);
  }

  window(): readonly StripSample[] {
    return this.samples;
  }

  /** Pixel polyline for the current window. */
  polyline(
    width: number,
    height: number,
    lo: number,
    hi: number,
  ): Array<[number, number]> {
    if (this.samples.length === 0) return [];
    const t1 = this.samples[this.samples.length - 1].t_ms;
    const t0 = t1 - this.windowMs;
    return this.samples.map((s) => {
      const fx = (s.t_ms - t0) / this.windowMs;
      const fy = (s.value - lo) / (hi - lo);
      return [fx * width, height - fy * height];
    });
  }
}
