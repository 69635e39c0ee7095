import { describe, expect, test } from 'vitest';

import { animateBar, type AnimationReport } from '../src/animator.js';
import { progressFraction, type CurveName } from '../src/curves.js';
import { drive, SimulatedClock } from './fakes.js';

const HZ = [60, 120, 144] as const;
const CURVES: CurveName[] = ['constant', 'bezier', 'slow_down', 'speed_up', 'elasticity'];

async function record(
  clock: SimulatedClock,
  curve: CurveName,
  durationMs: number,
  onStep?: (fired: number) => void,
): Promise<AnimationReport> {
  let report: AnimationReport | null = null;
  let fired = 0;
  void animateBar({ curve, durationMs }, clock, () => {
    fired += 1;
  }).then((r) => {
    report = r;
  });
  await drive(clock, () => report !== null, { onStep: () => onStep?.(fired) });
  return report!;
}

describe('duration fidelity across refresh rates', () => {
  // 5000 ms standard, a staircase-typical 120 Hz quantized duration, and a
  // short bar that is not a whole number of frames at any tested rate.
  const durations = [5000, (602 / 120) * 1000, 2487.5];

  for (const hz of HZ) {
    for (const durationMs of durations) {
      test(`${hz} Hz, ${durationMs.toFixed(1)} ms ends within one frame`, async () => {
        const period = 1000 / hz;
        const clock = new SimulatedClock(period);
        const report = await record(clock, 'constant', durationMs);
        expect(report.overrunMs).toBeGreaterThanOrEqual(0);
        expect(report.overrunMs).toBeLessThanOrEqual(period + 1e-6);
        expect(report.endedAtMs - report.startedAtMs - durationMs).toBeLessThanOrEqual(
          period + 1e-6,
        );
        expect(Math.abs(report.framePeriodMs - period)).toBeLessThanOrEqual(1e-6);
        expect(report.tooSlow).toBe(false);
      });
    }
  }
});

describe('rendered fill fidelity', () => {
  for (const hz of HZ) {
    for (const curve of CURVES) {
      test(`${curve} at ${hz} Hz stays within 1 px of the curve`, async () => {
        const durationMs = 5000;
        const clock = new SimulatedClock(1000 / hz);
        const report = await record(clock, curve, durationMs);
        expect(report.samples.length).toBeGreaterThan(hz * 4);
        let prev = -1;
        for (const { elapsedMs, px } of report.samples) {
          const u = Math.min(elapsedMs / durationMs, 1);
          expect(Math.abs(px - 600 * progressFraction(curve, u))).toBeLessThanOrEqual(1);
          expect(px).toBeGreaterThanOrEqual(prev);
          prev = px;
        }
        expect(report.samples[0]!.px).toBe(0);
        expect(report.samples[report.samples.length - 1]!.px).toBe(600);
      });
    }
  }
});

describe('display-too-slow detection', () => {
  test('a long stall at the end of the animation flags the trial', async () => {
    const clock = new SimulatedClock(1000 / 60);
    let stalled = false;
    const report = await record(clock, 'constant', 1000, (fired) => {
      // 61 frames would end the bar on time; hang the display late.
      if (!stalled && fired === 55) {
        stalled = true;
        clock.stallNextFrame(300);
      }
    });
    expect(report.tooSlow).toBe(true);
    expect(report.overrunMs).toBeGreaterThan(2 * report.framePeriodMs);
  });

  test('a mid-animation stall with an on-time end is not flagged', async () => {
    const clock = new SimulatedClock(1000 / 60);
    let stalled = false;
    const report = await record(clock, 'constant', 1000, (fired) => {
      if (!stalled && fired === 20) {
        stalled = true;
        clock.stallNextFrame(300);
      }
    });
    // Frames were dropped, but elapsed-time positioning caught back up and
    // the end landed on schedule: duration fidelity held.
    expect(report.tooSlow).toBe(false);
    expect(report.overrunMs).toBeLessThanOrEqual(report.framePeriodMs + 1e-6);
  });
});
