/**
 * Console state and the pure math behind it: steer mapping, the 80 ms
 * first-order input filter, and the predicted-path overlay geometry.
 */

export const MAX_STEER_RAD = (35 * Math.PI) / 180;
export const STEER_FILTER_TAU_S = 0.08;
export const KEYBOARD_RAMP_PER_S = 2.0; // normalized units per second held

export interface Telemetry {
  seq: number;
  latency_ms: number;
  speed_mps: number;
  steer_rad: number;
  pp: boolean;
  emergency: boolean;
  deviation_m: number;
  wheelbase: number;
}

export interface ConsoleState {
  connected: boolean;
  role: "driver" | "observer" | null;
  pp: boolean;
  steerInput: number; // normalized [-1, 1], right positive
  steerFiltered: number; // normalized, after the first-order filter
  lastTelemetry: Telemetry | null;
  latencyMs: number | null;
  speedMps: number;
  deviationM: number;
  framesDrawn: number;
  framesSkipped: number;
  lapStartMs: number | null;
  wheelbase: number;
}

export function initialState(): ConsoleState {
  return {
    connected: false,
    role: null,
    pp: true,
    steerInput: 0,
    steerFiltered: 0,
    lastTelemetry: null,
    latencyMs: null,
    speedMps: 0,
    deviationM: 0,
    framesDrawn: 0,
    framesSkipped: 0,
    lapStartMs: null,
    wheelbase: 1.76,
  };
}

/** Normalized input in [-1, 1] to front-wheel angle in radians. */
export function steerToRadians(normalized: number): number {
  const clamped = Math.min(Math.max(normalized, -1), 1);
  return clamped * MAX_STEER_RAD;
}

/** Gamepad axis maps linearly: axis 0.5 is 17.5 degrees right. */
export function gamepadAxisToSteer(axis: number): number {
  return Math.min(Math.max(axis, -1), 1);
}

/** One step of the 80 ms first-order lag filter. */
export function filterStep(prev: number, target: number, dtS: number): number {
  const alpha = 1 - Math.exp(-dtS / STEER_FILTER_TAU_S);
  return prev + alpha * (target - prev);
}

/**
 * Held arrow keys ramp the steer input toward the corresponding limit.
 * Screen-right (ArrowRight) is positive steer, matching the image frame;
 * with neither or both keys held the input relaxes toward zero.
 */
export function keyboardRamp(
  prev: number,
  left: boolean,
  right: boolean,
  dtS: number,
): number {
  const step = KEYBOARD_RAMP_PER_S * dtS;
  let next: number;
  if (right && !left) {
    next = prev + step;
  } else if (left && !right) {
    next = prev - step;
  } else if (Math.abs(prev) <= step) {
    next = 0;
  } else {
    next = prev - Math.sign(prev) * step;
  }
  return Math.min(Math.max(next, -1), 1);
}

export interface PathPoint {
  u: number; // pixel column, 1-based to match the projection convention
  v: number; // pixel row
}

/**
 * Predicted-path overlay: the circular arc of radius L / tan(delta) that the
 * single-track model follows at the current steer, projected onto the image
 * through the same pinhole constants the warp uses (1-based pixels,
 * kx = tan(fovH/2) / (W/2)). Zero steer degenerates to a straight line.
 *
 * The path is drawn on the ground plane at camera height h; points behind
 * the near plane or outside the vertical FOV are omitted.
 */
export function predictedPath(
  steerRad: number,
  wheelbase: number,
  width: number,
  height: number,
  fovH: number,
  fovV: number,
  camHeight = 1.6,
  maxDistM = 12,
  steps = 48,
): PathPoint[] {
  const kx = Math.tan(fovH / 2) / (width / 2);
  const ky = Math.tan(fovV / 2) / (height / 2);
  const cx = width / 2 + 0.5;
  const cy = height / 2 + 0.5;
  const pts: PathPoint[] = [];
  const straight = Math.abs(Math.tan(steerRad)) < 1e-6;
  const radius = straight ? Infinity : wheelbase / Math.tan(steerRad);
  for (let i = 1; i <= steps; i++) {
    const s = (maxDistM * i) / steps; // arc length travelled
    let x: number;
    let z: number;
    if (straight) {
      x = 0;
      z = s;
    } else {
      const phi = s / radius;
      x = radius * (1 - Math.cos(phi));
      z = radius * Math.sin(phi);
    }
    if (z < 0.5) continue; // behind or at the near plane
    const u = cx + x / (kx * z);
    const v = cy + camHeight / (ky * z);
    if (v < 1 || v > height) continue;
    pts.push({ u, v });
  }
  return pts;
}
