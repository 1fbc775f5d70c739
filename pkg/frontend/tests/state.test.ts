import { describe, expect, it } from "vitest";

import { SCALE_MAX, SCALE_MIN, clampScale } from "../src/state.js";

describe("clampScale", () => {
  it("passes in-range grid values through", () => {
    expect(clampScale(0.0)).toBe(0.0);
    expect(clampScale(1.0)).toBe(1.0);
    expect(clampScale(1.5)).toBe(1.5);
    expect(clampScale(2.0)).toBe(2.0);
  });

  it("snaps to the 0.1 step grid", () => {
    expect(clampScale(0.349)).toBeCloseTo(0.3, 10);
    expect(clampScale(0.351)).toBeCloseTo(0.4, 10);
    expect(clampScale(1.2500001)).toBeCloseTo(1.3, 10);
  });

  it("makes out-of-range values unreachable", () => {
    expect(clampScale(-5)).toBe(SCALE_MIN);
    expect(clampScale(2.1)).toBe(SCALE_MAX);
    expect(clampScale(99)).toBe(SCALE_MAX);
    expect(clampScale(Number.NaN)).toBe(SCALE_MIN);
    expect(clampScale(Number.POSITIVE_INFINITY)).toBe(SCALE_MAX);
  });

  it("emits clean one-decimal payload values", () => {
    for (let raw = -1; raw <= 3; raw += 0.07) {
      const v = clampScale(raw);
      expect(v).toBe(Math.round(v * 10) / 10);
      expect(v).toBeGreaterThanOrEqual(SCALE_MIN);
      expect(v).toBeLessThanOrEqual(SCALE_MAX);
    }
  });
});
