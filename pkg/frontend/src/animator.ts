// One bar animation. Position is a function of elapsed wall-clock time
// sampled on each display-refresh callback, never of frame counts, so the
// bar's duration is faithful on any refresh rate. The report carries
// enough timing evidence to flag trials where the display could not keep up.

import type { Clock } from './clock.js';
import { fillWidthPx, TRACK_W_PX, type CurveName } from './curves.js';

export interface BarAnimation {
  curve: CurveName;
  durationMs: number;
  trackPx?: number;
}

export interface FrameSample {
  elapsedMs: number;
  px: number;
}

export interface AnimationReport {
  startedAtMs: number;
  endedAtMs: number;
  nominalMs: number;
  /** How far past the nominal duration the closing frame landed. */
  overrunMs: number;
  /** Median inter-frame interval, i.e. the detected refresh period. */
  framePeriodMs: number;
  /** True when the animation ended more than two frames late. */
  tooSlow: boolean;
  samples: FrameSample[];
}

const FALLBACK_PERIOD_MS = 1000 / 60;
const TOO_SLOW_FRAMES = 2;

function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  const lo = sorted[mid - 1];
  const hi = sorted[mid];
  if (hi === undefined) return FALLBACK_PERIOD_MS;
  return sorted.length % 2 === 0 && lo !== undefined ? (lo + hi) / 2 : hi;
}

export function animateBar(
  anim: BarAnimation,
  clock: Clock,
  setFill: (px: number) => void,
): Promise<AnimationReport> {
  const trackPx = anim.trackPx ?? TRACK_W_PX;
  return new Promise((resolve) => {
    let startedAt: number | null = null;
    let lastAt = 0;
    const deltas: number[] = [];
    const samples: FrameSample[] = [];

    const tick = (t: number) => {
      if (startedAt === null) {
        startedAt = t;
      } else {
        deltas.push(t - lastAt);
      }
      lastAt = t;
      const elapsed = t - startedAt;
      const px = fillWidthPx(anim.curve, elapsed, anim.durationMs, trackPx);
      setFill(px);
      samples.push({ elapsedMs: elapsed, px });
      if (elapsed >= anim.durationMs) {
        const framePeriodMs = deltas.length > 0 ? median(deltas) : FALLBACK_PERIOD_MS;
        const overrunMs = elapsed - anim.durationMs;
        resolve({
          startedAtMs: startedAt,
          endedAtMs: t,
          nominalMs: anim.durationMs,
          overrunMs,
          framePeriodMs,
          tooSlow: overrunMs > TOO_SLOW_FRAMES * framePeriodMs,
          samples,
        });
        return;
      }
      clock.requestFrame(tick);
    };
    clock.requestFrame(tick);
  });
}
