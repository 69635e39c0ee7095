// Progress-curve math, a direct port of the server's curve module. The
// fill fraction p(u) maps normalized time u in [0, 1] to [0, 1] with
// p(0) = 0 and p(1) = 1; pixel widths must agree with the server's
// rendering semantics (round half up) so logged and displayed bars match.

export type CurveName =
  | 'constant'
  | 'bezier'
  | 'slow_down'
  | 'speed_up'
  | 'elasticity';

export const TRACK_W_PX = 600;
export const TRACK_H_PX = 20;
export const FIXATION_PX = 2;

// Normalizer for the elasticity curve: p(u) = (e^u (1+u) - 1) / (2e - 1).
const ELASTIC_NORM = 2 * Math.E - 1;

// Interior control values of the cubic Bernstein form; (0, 1) gives the
// canonical ease 3u^2 - 2u^3.
const BEZIER_C1 = 0;
const BEZIER_C2 = 1;

export function progressFraction(curve: CurveName, u: number): number {
  if (!(u >= 0 && u <= 1)) {
    throw new RangeError(`u must be in [0, 1], got ${u}`);
  }
  switch (curve) {
    case 'constant':
      return u;
    case 'speed_up':
      return u * u;
    case 'slow_down':
      return 2 * u - u * u;
    case 'bezier': {
      const omu = 1 - u;
      return 3 * u * omu * omu * BEZIER_C1 + 3 * u * u * omu * BEZIER_C2 + u ** 3;
    }
    case 'elasticity':
      return (Math.exp(u) * (1 + u) - 1) / ELASTIC_NORM;
  }
}

// Bar fill width in pixels after elapsedMs of a durationMs animation.
// The fraction is clamped so overshooting parameterizations never paint
// outside the track; at elapsedMs >= durationMs the fill is exactly trackPx.
export function fillWidthPx(
  curve: CurveName,
  elapsedMs: number,
  durationMs: number,
  trackPx: number = TRACK_W_PX,
): number {
  const u = Math.min(Math.max(elapsedMs / durationMs, 0), 1);
  const frac = Math.min(Math.max(progressFraction(curve, u), 0), 1);
  return Math.floor(trackPx * frac + 0.5);
}
