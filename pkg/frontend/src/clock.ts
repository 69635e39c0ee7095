// Time source for the whole UI. Everything that waits or animates goes
// through this interface so tests can substitute a simulated display clock
// and drive a full session in virtual time.

export interface Clock {
  /** Milliseconds, monotonic within a session. */
  now(): number;
  /** Schedule a display-refresh callback; returns a cancel handle. */
  requestFrame(cb: (timestampMs: number) => void): number;
  cancelFrame(handle: number): void;
  /** Resolve after ms of clock time. */
  wait(ms: number): Promise<void>;
}

export class BrowserClock implements Clock {
  now(): number {
    return performance.now();
  }

  requestFrame(cb: (timestampMs: number) => void): number {
    return requestAnimationFrame(cb);
  }

  cancelFrame(handle: number): void {
    cancelAnimationFrame(handle);
  }

  wait(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
  }
}
