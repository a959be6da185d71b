/**
 * 50 Hz input loop: samples keyboard and gamepad, smooths the steer with the
 * 80 ms first-order filter, and emits one encoded command per tick. Zero
 * steer is still sent when idle; the stream doubles as the link heartbeat
 * that keeps the vehicle watchdog fed.
 */

import { encodeCommand } from "./protocol.js";
import {
  filterStep,
  gamepadAxisToSteer,
  keyboardRamp,
  steerToRadians,
} from "./state.js";

export const COMMAND_HZ = 50;
export const TICK_MS = 1000 / COMMAND_HZ;

export interface InputSources {
  /** True while the named key is held. */
  keyHeld(code: "ArrowLeft" | "ArrowRight"): boolean;
  /** Primary gamepad steering axis in [-1, 1], or null if absent. */
  gamepadAxis(): number | null;
}

export class InputLoop {
  steerInput = 0;
  steerFiltered = 0;
  ticks = 0;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly sources: InputSources,
    private readonly send: (packet: ArrayBuffer, steerRad: number) => void,
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.tick(TICK_MS / 1000), TICK_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One sampling tick; exposed for tests driving a fake clock. */
  tick(dtS: number): void {
    const axis = this.sources.gamepadAxis();
    if (axis !== null) {
      this.steerInput = gamepadAxisToSteer(axis);
    } else {
      this.steerInput = keyboardRamp(
        this.steerInput,
        this.sources.keyHeld("ArrowLeft"),
        this.sources.keyHeld("ArrowRight"),
        dtS,
      );
    }
    this.steerFiltered = filterStep(this.steerFiltered, this.steerInput, dtS);
    const steerRad = steerToRadians(this.steerFiltered);
    this.ticks += 1;
    // timestamps and delay percentiles are stamped server-side on receipt
    this.send(
      encodeCommand({ steer: steerRad, tsStation: 0, p95: 0, p999: 0 }),
      steerRad,
    );
  }
}
