/**
 * Canvas rendering: draws the latest display frame and the HUD overlay.
 * Decode failures skip the frame and bump a counter; they never take the
 * input loop or the socket down.
 */

import { hudModel } from "./hud.js";
import { FramePacket, WireDecodeError, decodeFrame } from "./protocol.js";
import { ConsoleState } from "./state.js";

export class FrameRenderer {
  private drawing = false;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly state: ConsoleState,
  ) {}

  /** Decode a binary display packet; returns the packet or null on skip. */
  handlePacket(buf: ArrayBuffer): FramePacket | null {
    try {
      const frame = decodeFrame(buf);
      void this.draw(frame);
      return frame;
    } catch (err) {
      if (err instanceof WireDecodeError) {
        this.state.framesSkipped += 1;
        return null;
      }
      throw err;
    }
  }

  private async draw(frame: FramePacket): Promise<void> {
    if (this.drawing) return; // never queue behind a slow decode
    this.drawing = true;
    try {
      const blob = new Blob([frame.rgbPayload.buffer as ArrayBuffer]);
      const bitmap = await createImageBitmap(blob);
      const ctx = this.canvas.getContext("2d");
      if (!ctx) return;
      this.canvas.width = bitmap.width;
      this.canvas.height = bitmap.height;
      ctx.drawImage(bitmap, 0, 0);
      this.overlay(ctx, bitmap.width, bitmap.height, frame.fovH, frame.fovV);
      this.state.framesDrawn += 1;
    } catch {
      this.state.framesSkipped += 1;
    } finally {
      this.drawing = false;
    }
  }

  private overlay(
    ctx: CanvasRenderingContext2D,
    width: number,
    height: number,
    fovH: number,
    fovV: number,
  ): void {
    const hud = hudModel(this.state, width, height, fovH, fovV);
    if (hud.path.length >= 2) {
      ctx.strokeStyle = "rgba(80, 220, 120, 0.9)";
      ctx.lineWidth = 2;
      ctx.beginPath();
      // protocol pixels are 1-based; canvas is 0-based
      ctx.moveTo(hud.path[0].u - 1, hud.path[0].v - 1);
      for (const p of hud.path.slice(1)) ctx.lineTo(p.u - 1, p.v - 1);
      ctx.stroke();
    }
    ctx.font = "13px monospace";
    ctx.fillStyle = hud.statusText === "EMERGENCY STOP" ? "#ff5050" : "#f0f0f0";
    const lines = [
      hud.statusText,
      hud.latencyText,
      hud.speedText,
      hud.deviationText,
      hud.modeText,
    ];
    lines.forEach((text, i) => ctx.fillText(text, 8, 18 + 16 * i));
  }
}
