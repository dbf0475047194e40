import { describe, expect, it } from 'vitest';

import {
  cellLabels,
  copLayout,
  copToPixel,
  footBoxes,
  renderCopView,
  StripBuffer,
} from '../src/render.js';
import { makeFrame } from './protocol.test.js';

const VIEW = { width: 640, height: 340, margin: 24 };

describe('cop layout', () => {
  it('maps the dot as an affine function of (x, y)', () => {
    const layout = copLayout(VIEW);
    const [ox, oy] = copToPixel(layout, 0, 0);
    for (const [x, y] of [[1, 0], [-2, 1], [0.3, -0.4], [2, -1]] as const) {
      const [px, py] = copToPixel(layout, x, y);
      expect(px).toBeCloseTo(ox + layout.scale * x, 10);
      expect(py).toBeCloseTo(oy - layout.scale * y, 10);
    }
  });

  it('keeps the 2:1 X:Y aspect (equal scale per unit)', () => {
    const layout = copLayout(VIEW);
    const [x0] = copToPixel(layout, -2, 0);
    const [x1] = copToPixel(layout, 2, 0);
    const [, y0] = copToPixel(layout, 0, 1);
    const [, y1] = copToPixel(layout, 0, -1);
    expect(x1 - x0).toBeCloseTo(2 * (y1 - y0), 10);
  });

  it('fits inside the viewport margin', () => {
    const layout = copLayout(VIEW);
    for (const [x, y] of [[-2, -1], [2, 1], [-2, 1], [2, -1]] as const) {
      const [px, py] = copToPixel(layout, x, y);
      expect(px).toBeGreaterThanOrEqual(VIEW.margin - 1e-9);
      expect(px).toBeLessThanOrEqual(VIEW.width - VIEW.margin + 1e-9);
      expect(py).toBeGreaterThanOrEqual(VIEW.margin - 1e-9);
      expect(py).toBeLessThanOrEqual(VIEW.height - VIEW.margin + 1e-9);
    }
  });

  it('draws both foot outlines around their centers', () => {
    const layout = copLayout(VIEW);
    const feet = footBoxes(layout);
    expect(feet.map((f) => f.foot)).toEqual(['left', 'right']);
    const left = feet[0];
    const [cx, cy] = copToPixel(layout, -1, 0);
    expect(left.x + left.width / 2).toBeCloseTo(cx, 10);
    expect(left.y + left.height / 2).toBeCloseTo(cy, 10);
  });
});

describe('renderCopView', () => {
  it('centers the dot between the feet for a neutral frame', () => {
    const layout = copLayout(VIEW);
    const view = renderCopView(layout, makeFrame({ cop_x: 0, cop_y: 0 }), false);
    expect(view.dot).toEqual(copToPixel(layout, 0, 0));
    expect(view.fallBanner).toBe(false);
  });

  it('places a single-support reading over the left foot', () => {
    const layout = copLayout(VIEW);
    const view = renderCopView(layout, makeFrame({ cop_x: -1.3, cop_y: 0.16 }), false);
    const [px] = view.dot!;
    const left = footBoxes(layout)[0];
    expect(px).toBeGreaterThanOrEqual(left.x);
    expect(px).toBeLessThanOrEqual(left.x + left.width);
  });

  it('hides the dot when the robot reads lifted', () => {
    const layout = copLayout(VIEW);
    const frame = makeFrame({ cop_x: 0, cop_y: 0, f_total_g: 4 });
    expect(renderCopView(layout, frame, false).dot).toBeNull();
  });

  it('shows the fall banner and stale badge', () => {
    const layout = copLayout(VIEW);
    const view = renderCopView(layout, makeFrame({ fallen: 1 }), true);
    expect(view.fallBanner).toBe(true);
    expect(view.staleBadge).toBe(true);
  });

  it('labels all eight cells at their pad corners', () => {
    const layout = copLayout(VIEW);
    const labels = cellLabels(layout, makeFrame());
    expect(labels).toHaveLength(8);
    const leftLabels = labels.filter((l) => l.foot === 'left');
    const [footCenter] = copToPixel(layout, -1, 0);
    expect(leftLabels.filter((l) => l.x < footCenter)).toHaveLength(2);
    expect(leftLabels.filter((l) => l.x > footCenter)).toHaveLength(2);
  });

  it('paints a synthetic frame well inside the latency budget', () => {
    const layout = copLayout(VIEW);
    const t0 = performance.now();
    for (let i = 0; i < 100; i++) {
      renderCopView(layout, makeFrame({ seq: i, t_ms: i * 50 }), false);
    }
    const perFrame = (performance.now() - t0) / 100;
    expect(perFrame).toBeLessThan(100);
  });
});

describe('StripBuffer', () => {
  it('keeps only the rolling window', () => {
    const buf = new StripBuffer(30_000);
    for (let t = 0; t <= 60_000; t += 1000) buf.push(t, t / 1000);
    const window = buf.window();
    expect(window[0].t_ms).toBe(30_000);
    expect(window[window.length - 1].t_ms).toBe(60_000);
  });

  it('maps samples onto pixels with newest at the right edge', () => {
    const buf = new StripBuffer(10_000);
    buf.push(0, -1);
    buf.push(10_000, 1);
    const pts = buf.polyline(200, 100, -1, 1);
    expect(pts[0]).toEqual([0, 100]);
    expect(pts[1]).toEqual([200, 0]);
  });

  it('is empty before any samples', () => {
    expect(new StripBuffer().polyline(100, 100, -1, 1)).toEqual([]);
  });
});
