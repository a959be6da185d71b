/**
 * Entry point: connects the websocket, wires the renderer, the HUD state,
 * and the 50 Hz input loop together. The websocket receive path and the
 * input timer are independent event sources; ConsoleState is the only
 * shared mutable object.
 */

import { InputLoop } from "./input.js";
import { FrameRenderer } from "./render.js";
import { ConsoleState, Telemetry, initialState } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

export function startConsole(wsUrl: string): void {
  const state: ConsoleState = initialState();
  const canvas = byId<HTMLCanvasElement>("view");
  const banner = byId<HTMLDivElement>("banner");
  const ppButton = byId<HTMLButtonElement>("pp-toggle");
  const renderer = new FrameRenderer(canvas, state);

  const held = new Set<string>();
  window.addEventListener("keydown", (e) => held.add(e.code));
  window.addEventListener("keyup", (e) => held.delete(e.code));

  const ws = new WebSocket(wsUrl);
  ws.binaryType = "arraybuffer";

  const loop = new InputLoop(
    {
      keyHeld: (code) => held.has(code),
      gamepadAxis: () => {
        const pads = navigator.getGamepads ? navigator.getGamepads() : [];
        const pad = pads && pads[0];
        return pad && pad.axes.length > 0 ? pad.axes[0] : null;
      },
    },
    (packet, steerRad) => {
      if (state.connected && state.role === "driver") {
        ws.send(packet);
      }
      state.steerFiltered = steerRad / ((35 * Math.PI) / 180);
    },
  );

  ws.onopen = () => {
    state.connected = true;
    banner.textContent = "";
    loop.start();
  };

  ws.onclose = () => {
    state.connected = false;
    loop.stop(); // server watchdog stops the vehicle once commands cease
    banner.textContent = "disconnected: vehicle stopping";
  };

  ws.onmessage = (event) => {
    if (event.data instanceof ArrayBuffer) {
      renderer.handlePacket(event.data);
      return;
    }
    const msg = JSON.parse(event.data as string);
    if (msg.type === "hello") {
      state.role = msg.role;
      state.wheelbase = msg.wheelbase ?? state.wheelbase;
      banner.textContent = msg.role === "observer" ? "observing (read-only)" : "";
    } else if (msg.type === "telemetry") {
      const t = msg as Telemetry & { type: string };
      state.lastTelemetry = t;
      state.latencyMs = t.latency_ms;
      state.speedMps = t.speed_mps;
      state.deviationM = t.deviation_m;
      state.pp = t.pp;
      ppButton.textContent = t.pp ? "PP: on" : "PP: off";
    } else if (msg.type === "mode_ack") {
      state.pp = msg.pp;
      ppButton.textContent = msg.pp ? "PP: on" : "PP: off";
    }
  };

  ppButton.addEventListener("click", () => {
    if (ws.readyState === WebSocket.OPEN) {
      ws.send(JSON.stringify({ type: "mode", pp: !state.pp }));
    }
  });
}
