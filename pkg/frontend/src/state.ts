/** UI state and the slider range contract. */

export const SCALE_MIN = 0.0;
export const SCALE_MAX = 2.0;
export const SCALE_STEP = 0.1;

export type ViewMode = "single" | "side-by-side" | "grid";

export interface Scales {
  lambdaPix: number;
  lambdaSem: number;
}

export interface UiState {
  imageId: string | null;
  scales: Scales;
  viewMode: ViewMode;
  inFlight: boolean;
}

export function initialState(): UiState {
  return {
    imageId: null,
    scales: { lambdaPix: 1.0, lambdaSem: 1.0 },
    viewMode: "single",
    inFlight: false,
  };
}

/**
 * Snap a raw slider value onto the legal grid. Controls route every value
 * through this, which is what makes out-of-range scales unreachable.
 */
export function clampScale(value: number): number {
  if (Number.isNaN(value)) return SCALE_MIN;
  const snapped = Math.round(value / SCALE_STEP) * SCALE_STEP;
  const clamped = Math.min(SCALE_MAX, Math.max(SCALE_MIN, snapped));
  // avoid 0.30000000000000004-style float debris in request payloads
  return Math.round(clamped * 10) / 10;
}
