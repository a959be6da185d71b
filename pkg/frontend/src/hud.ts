/**
 * HUD model: pure functions that turn console state into the overlay
 * strings and the predicted-path polyline. Kept DOM-free so tests can
 * exercise them directly; render.ts draws the result.
 */

import { ConsoleState, PathPoint, predictedPath, steerToRadians } from "./state.js";

export interface HudModel {
  latencyText: string;
  speedText: string;
  deviationText: string;
  modeText: string;
  statusText: string;
  path: PathPoint[];
}

export function hudModel(
  state: ConsoleState,
  width: number,
  height: number,
  fovH: number,
  fovV: number,
): HudModel {
  const latencyText =
    state.latencyMs === null ? "latency: --" : `latency: ${state.latencyMs.toFixed(0)} ms`;
  const kmh = state.speedMps * 3.6;
  const speedText = `speed: ${kmh.toFixed(1)} km/h`;
  const deviationText = `deviation: ${state.deviationM.toFixed(2)} m`;
  const modeText = state.pp ? "predictive display: ON" : "predictive display: OFF";
  const statusText = state.lastTelemetry?.emergency
    ? "EMERGENCY STOP"
    : state.connected
      ? `connected (${state.role ?? "?"})`
      : "disconnected";
  return {
    latencyText,
    speedText,
    deviationText,
    modeText,
    statusText,
    path: predictedPath(
      steerToRadians(state.steerFiltered),
      state.wheelbase,
      width,
      height,
      fovH,
      fovV,
    ),
  };
}
