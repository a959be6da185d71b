"""Live teleoperation service for the browser console.

Runs the simulated vehicle at wall-clock pace and exposes one websocket:
binary frame packets downstream, binary 40-byte command packets upstream,
and JSON text messages for control (mode toggle, reset) and per-frame
telemetry. The first connected console drives; later ones observe.
"""

import asyncio
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import containers
from .delay_model import (DelayWindow, PercentileEstimate, WATCHDOG_CAP_S,
                          refresh_percentiles, schedule_actuation,
                          watchdog_check)
from .depth_codec import CodecParams, decode_map, encode_map
from .motion import (DelayBookkeeping, SteerHistory, VehicleGeometry, forecast)
from .projection import RgbImage, project_frame
from .simworld import (PlantState, build_scene, camera_world_pose, forward_point,
                       make_track, plant_step, render)
from .wire import (CommandMsg, ConstantDelay, DelayedChannel, FrameMsg,
                   WireDecodeError, decode_command, encode_frame)

PLANT_DT = 0.001
EMERGENCY_DECEL = 3.0


@dataclass
class ServiceConfig:
    track: str = "r7_80"
    seed: int = 0
    width: int = 336
    height: int = 188
    fps: float = 15.0
    speed_kmh: float = 10.0
    downlink_delay: float = 0.100
    uplink_delay: float = 0.050
    pp: bool = True
    cam_pitch_deg: float = 5.0

    @property
    def speed(self) -> float:
        return self.speed_kmh / 3.6


class LiveSession:
    """Wall-clock paced closed loop with a console in place of the scripted operator.

    All methods take an explicit ``now`` so tests can drive the session on a
    fake clock; the asyncio runner feeds it time.monotonic().
    """

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.geom = VehicleGeometry(wheelbase=1.76, cam_offset=0.8,
                                    cam_pitch=math.radians(cfg.cam_pitch_deg))
        self.codec = CodecParams()
        self.track = make_track(cfg.track)
        self.scene = build_scene(self.track, seed=cfg.seed)
        self.pp = cfg.pp
        self.downlink = DelayedChannel(ConstantDelay(cfg.downlink_delay))
        self.uplink = DelayedChannel(ConstantDelay(cfg.uplink_delay))
        self.window = DelayWindow(capacity=500)
        self.history = SteerHistory(retention=2.0)
        self.estimate = PercentileEstimate(
            p95=min(cfg.uplink_delay, WATCHDOG_CAP_S),
            p999=min(cfg.uplink_delay, WATCHDOG_CAP_S), fitted_at=0.0)
        self.frame_count = 0
        self.reset(now=0.0)

    def reset(self, now: float):
        start = self.track.point_at(0.0)
        self.state = PlantState(x=float(start[0]), y=float(start[1]),
                                psi=self.track.heading_at(0.0), v=0.0)
        self.hold_queue = []
        self.current_steer = 0.0
        self.last_cmd_rx = now
        self.last_cmd_est = None
        self.emergency = False
        self.n_cmds = 0
        self.next_frame = now
        self.next_fit = now + 1.0
        self.last_time = now
        self.accel = 0.0

    # -- uplink ------------------------------------------------------------

    def submit_command(self, raw: bytes, now: float) -> CommandMsg:
        """Re-stamp a console command server-side and queue it on the uplink."""
        cmd = decode_command(raw)
        stamped = CommandMsg(steer=cmd.steer, ts_station=now,
                             p95=self.estimate.p95, p999=self.estimate.p999)
        if self.history._ts and now <= self.history._ts[-1]:
            return stamped  # duplicate tick timestamp; keep the first
        self.history.append(now, stamped.steer)
        self.uplink.send(stamped, now)
        return stamped

    def _drain_uplink(self, now: float):
        for cmd, delay in self.uplink.poll(now):
            self.n_cmds += 1
            self.window.record(now, max(now - cmd.ts_station, 0.0))
            self.last_cmd_rx = now
            self.last_cmd_est = PercentileEstimate(p95=cmd.p95, p999=cmd.p999,
                                                   fitted_at=now)
            apply_at = max(schedule_actuation(cmd.ts_station, self.last_cmd_est), now)
            self.hold_queue.append((apply_at, cmd.steer))
            self.emergency = False

    # -- plant -------------------------------------------------------------

    def advance(self, now: float):
        """Step the plant from last_time to now in <= 1 ms substeps."""
        self._drain_uplink(now)
        t = self.last_time
        while t < now - 1e-12:
            dt = min(PLANT_DT, now - t)
            t += dt
            while self.hold_queue and self.hold_queue[0][0] <= t:
                _, self.current_steer = self.hold_queue.pop(0)
            # starvation measured from the last command's receive time: the
            # uplink transport offset is already absorbed by hold-and-apply
            if not self.emergency and self.n_cmds > 0:
                if watchdog_check(self.last_cmd_rx, t,
                                  self.last_cmd_est) == "emergency_stop":
                    self.emergency = True
            if self.emergency:
                self.accel = -EMERGENCY_DECEL if self.state.v > 0 else 0.0
            else:
                self.accel = min(max((self.cfg.speed - self.state.v) / 0.5,
                                     -EMERGENCY_DECEL), 1.5)
            self.state = plant_step(self.state, self.current_steer, self.accel,
                                    dt, self.geom)
        self.last_time = now
        if now >= self.next_fit:
            self.estimate = refresh_percentiles(self.window, now, self.estimate)
            self.next_fit = now + 1.0

    # -- downlink ----------------------------------------------------------

    def maybe_capture(self, now: float):
        """Render and queue a frame when the 1/fps period has elapsed."""
        if now < self.next_frame:
            return
        self.next_frame = now + 1.0 / self.cfg.fps
        self.frame_count += 1
        cam = camera_world_pose(self.state, self.geom)
        rgb, dm = render(self.scene, cam, self.cfg.width, self.cfg.height,
                         math.radians(90.0), math.radians(60.0))
        msg = FrameMsg(seq=self.frame_count, t0_capture=now,
                       speed=self.state.v, accel=self.accel,
                       fov_h=math.radians(90.0), fov_v=math.radians(60.0),
                       pitch=self.geom.cam_pitch,
                       rgb_payload=containers.rgb_to_payload(rgb.data),
                       depth_payload=containers.codes_to_payload(
                           encode_map(dm, self.codec).codes))
        self.downlink.send(msg, now)

    def poll_display(self, now: float):
        """Delayed frames ready for the console: (payload bytes, telemetry dict)."""
        out = []
        for msg, _delay in self.downlink.poll(now):
            tau1 = now - msg.t0_capture
            rgb = RgbImage(containers.payload_to_rgb(msg.rgb_payload))
            if self.pp:
                bk = DelayBookkeeping(t0=msg.t0_capture, t1=now,
                                      tau2=self.estimate.p95)
                delta = forecast(bk, self.history, msg.speed, msg.accel,
                                 self.estimate.p95, self.geom)
                dm = decode_map(_encoded(msg, self.codec), self.codec)
                shown, _warp = project_frame(rgb, dm, delta, self.geom)
            else:
                shown = rgb
            display = FrameMsg(seq=msg.seq, t0_capture=msg.t0_capture,
                               speed=msg.speed, accel=msg.accel,
                               fov_h=msg.fov_h, fov_v=msg.fov_v, pitch=msg.pitch,
                               rgb_payload=containers.rgb_to_payload(
                                   np.asarray(shown.data)))
            telemetry = {
                "type": "telemetry", "seq": msg.seq,
                "latency_ms": round(tau1 * 1000.0, 3),
                "speed_mps": round(float(msg.speed), 4),
                "steer_rad": round(self.current_steer, 5),
                "pp": self.pp,
                "emergency": self.emergency,
                "deviation_m": round(self.track.deviation(
                    forward_point(self.state, self.geom)), 4),
                "wheelbase": self.geom.wheelbase,
            }
            out.append((encode_frame(display), telemetry))
        return out

    def handle_control(self, text: str, now: float) -> dict:
        """JSON control channel: mode toggle, reset, lap mark."""
        try:
            req = json.loads(text)
        except json.JSONDecodeError:
            return {"type": "error", "message": "bad json"}
        kind = req.get("type")
        if kind == "mode":
            self.pp = bool(req.get("pp", True))
            return {"type": "mode_ack", "pp": self.pp}
        if kind == "reset":
            self.reset(now)
            return {"type": "reset_ack"}
        if kind == "ping":
            return {"type": "pong", "t": req.get("t")}
        return {"type": "error", "message": f"unknown control {kind!r}"}


def _encoded(msg: FrameMsg, codec: CodecParams):
    from .depth_codec import EncodedDepthMap

    return EncodedDepthMap(containers.payload_to_codes(msg.depth_payload),
                           fov_h=msg.fov_h, fov_v=msg.fov_v)


def _console_dir():
    """Static operator-console bundle, when present in a source checkout."""
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[2] / "frontend"
    return root if (root / "index.html").is_file() else None


def build_app(session: LiveSession, version: str = "0.1.0"):
    """FastAPI app: /health, the /ws console endpoint, and the static console."""
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    @asynccontextmanager
    async def lifespan(app):
        app.state.task = asyncio.create_task(_run_loop(app, session))
        try:
            yield
        finally:
            app.state.task.cancel()

    app = FastAPI(title="teleview", lifespan=lifespan)
    app.state.session = session
    app.state.driver = None
    app.state.observers = []

    @app.get("/health")
    def health():
        return {"status": "ok", "version": version,
                "track": session.cfg.track, "pp": session.pp,
                "frames": session.frame_count}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        role = "driver" if app.state.driver is None else "observer"
        if role == "driver":
            app.state.driver = ws
        else:
            app.state.observers.append(ws)
        await ws.send_text(json.dumps({
            "type": "hello", "role": role, "version": version,
            "wheelbase": session.geom.wheelbase,
            "fov_h": math.degrees(math.radians(90.0)),
        }))
        try:
            while True:
                msg = await ws.receive()
                if msg.get("type") == "websocket.disconnect":
                    break
                now = time.monotonic()
                if msg.get("bytes") is not None:
                    if role != "driver":
                        continue  # observers cannot steer
                    try:
                        session.submit_command(msg["bytes"], now)
                    except (WireDecodeError, ValueError):
                        pass  # malformed command: drop, keep the socket alive
                elif msg.get("text"):
                    if role != "driver":
                        req_type = None
                        try:
                            req_type = json.loads(msg["text"]).get("type")
                        except json.JSONDecodeError:
                            pass
                        if req_type not in ("ping",):
                            await ws.send_text(json.dumps(
                                {"type": "error", "message": "read-only observer"}))
                            continue
                    await ws.send_text(json.dumps(
                        session.handle_control(msg["text"], now)))
        except WebSocketDisconnect:
            pass
        finally:
            if app.state.driver is ws:
                app.state.driver = None
            elif ws in app.state.observers:
                app.state.observers.remove(ws)

    console = _console_dir()
    if console is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console, html=True), name="console")

    return app


async def _run_loop(app, session: LiveSession):
    """Wall-clock pacing: advance the plant, capture, and push delayed frames."""
    session.reset(time.monotonic())
    while True:
        now = time.monotonic()
        session.advance(now)
        session.maybe_capture(now)
        for payload, telemetry in session.poll_display(now):
            targets = ([app.state.driver] if app.state.driver else []) \
                + list(app.state.observers)
            text = json.dumps(telemetry)
            for ws in targets:
                try:
                    await ws.send_bytes(payload)
                    await ws.send_text(text)
                except Exception:
                    pass  # disconnects are handled by the endpoint task
        await asyncio.sleep(0.002)


def serve(cfg: ServiceConfig, port: int = 8000, host: str = "127.0.0.1"):
    """Blocking entry point used by the CLI."""
    import uvicorn

    app = build_app(LiveSession(cfg))
    uvicorn.run(app, host=host, port=port, log_level="warning")
