/**
 * Debounced restore scheduling: collapse slider scrubbing into one request
 * per settle window, keep at most one request in flight, and discard stale
 * responses by sequence number.
 */

import { ApiError, RestoreResult } from "./api.js";
import { Scales } from "./state.js";

export const DEBOUNCE_MS = 150;

/** The slice of the API the controller needs; tests substitute fakes. */
export interface RestoreApi {
  restore(imageId: string, scales: Scales): Promise<RestoreResult>;
}

export interface ControllerCallbacks {
  onResult: (result: RestoreResult, scales: Scales) => void;
  onError: (err: unknown, scales: Scales) => void;
}

type Timers = {
  setTimeout: (fn: () => void, ms: number) => unknown;
  clearTimeout: (handle: unknown) => void;
};

export class RestoreController {
  private timerHandle: unknown = null;
  private sequence = 0;
  private pendingScales: Scales | null = null;
  private inFlight = false;
  requestCount = 0;

  constructor(
    private api: RestoreApi,
    private imageId: string,
    private callbacks: ControllerCallbacks,
    private timers: Timers = globalThis as unknown as Timers,
  ) {}

  /** Called on every slider input event; only settles trigger a request. */
  scheduleRestore(scales: Scales): void {
    this.pendingScales = scales;
    if (this.timerHandle !== null) this.timers.clearTimeout(this.timerHandle);
    this.timerHandle = this.timers.setTimeout(() => {
      this.timerHandle = null;
      void this.fire();
    }, DEBOUNCE_MS);
  }

  /** Immediate request (preset buttons); still sequence-checked. */
  restoreNow(scales: Scales): Promise<void> {
    this.pendingScales = scales;
    if (this.timerHandle !== null) {
      this.timers.clearTimeout(this.timerHandle);
      this.timerHandle = null;
    }
    return this.fire();
  }

  private async fire(): Promise<void> {
    if (this.pendingScales === null) return;
    if (this.inFlight) {
      // the settle that lands while a request runs re-fires on completion
      return;
    }
    const scales = this.pendingScales;
    this.pendingScales = null;
    const seq = ++this.sequence;
    this.inFlight = true;
    this.requestCount += 1;
    try {
      const result = await this.requestWithRetry(scales);
      if (seq === this.sequence) this.callbacks.onResult(result, scales);
    } catch (err) {
      if (seq === this.sequence) this.callbacks.onError(err, scales);
    } finally {
      this.inFlight = false;
      if (this.pendingScales !== null) void this.fire();
    }
  }

  private async requestWithRetry(scales: Scales): Promise<RestoreResult> {
    try {
      return await this.api.restore(this.imageId, scales);
    } catch (err) {
      if (err instanceof ApiError) throw err; // server answered; not transient
      this.requestCount += 1;
      return await this.api.restore(this.imageId, scales);
    }
  }
}
