"""Closed teleoperation loop: vehicle node, station node, delayed channels.

Composes the plant, hold-and-apply actuation, the GEV percentile estimator,
pose forecasting and (optionally) frame warping into one deterministic
event loop driven by an injected clock: 1 ms plant substeps, 30 Hz frames,
50 Hz commands, 1 Hz percentile refits.

The scripted operator steers by pure pursuit on the geometric pose implied
by the displayed frame: the delayed capture pose when prediction is off,
the forecast pose when it is on. This isolates the delay-compensation
effect; pixel-level fidelity of the warp is certified separately against
the synthetic-world renders.
"""

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import simworld
from .delay_model import (DelayWindow, PercentileEstimate, WATCHDOG_CAP_S,
                          GevParams, refresh_percentiles, schedule_actuation,
                          watchdog_check)
from .errors import InvalidInputError
from .motion import (AxlePose, DelayBookkeeping, SteerHistory, VehicleGeometry,
                     forecast_axle, _wrap_angle)
from .simworld import PlantState, Track, forward_point, make_track, plant_step
from .wire import (CommandMsg, ConstantDelay, DelayedChannel, FrameMsg,
                   GevDelay, TraceDelay, decode_command, decode_frame,
                   encode_command, encode_frame)

PLANT_DT = 0.001
FRAME_HZ = 30.0
COMMAND_HZ = 50.0
REFIT_PERIOD = 1.0
EMERGENCY_DECEL = 3.0  # m/s^2 ramp to zero speed on watchdog trip

MODES = ("in_vehicle", "teleop_pp", "teleop_nopp")


def make_delay_source(spec, seed: int = 0):
    """Build a channel delay source from a config mapping."""
    if spec is None:
        return ConstantDelay(0.0)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return ConstantDelay(float(spec.get("delay", 0.0)))
    if kind == "gev":
        params = GevParams(xi=float(spec["xi"]), mu=float(spec["mu"]),
                           sigma=float(spec["sigma"]))
        return GevDelay(params, seed=seed)
    if kind == "trace":
        from .delay_model import load_delay_trace

        return TraceDelay(load_delay_trace(spec["path"]))
    raise InvalidInputError(f"unknown delay source kind {kind!r}")


# Round-trip ~250 ms mean: heavier downlink (frames) plus a lighter uplink
# whose 99.9th percentile stays under the 200 ms watchdog cap.
DEFAULT_DOWNLINK = {"kind": "gev", "xi": 0.12, "mu": 0.162, "sigma": 0.012}
DEFAULT_UPLINK = {"kind": "gev", "xi": 0.10, "mu": 0.072, "sigma": 0.008}


@dataclass
class ExperimentConfig:
    track: str = "r7_80"
    mode: str = "teleop_pp"
    seed: int = 0
    speed_kmh: float = 10.0
    downlink: dict | None = None
    uplink: dict | None = None
    slip: float = 1.0
    lookahead: float = 1.2
    reaction_delay: float = 0.150
    max_duration: float = 90.0
    wheelbase: float = 1.76
    cam_offset: float = 0.8
    cam_pitch_deg: float = 5.0
    sections: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "in_vehicle":
            self.downlink = {"kind": "constant", "delay": 0.0}
            self.uplink = {"kind": "constant", "delay": 0.0}
        else:
            if self.downlink is None:
                self.downlink = dict(DEFAULT_DOWNLINK)
            if self.uplink is None:
                self.uplink = dict(DEFAULT_UPLINK)

    @property
    def pp_enabled(self) -> bool:
        return self.mode == "teleop_pp"

    @property
    def speed(self) -> float:
        return self.speed_kmh / 3.6

    @property
    def geometry(self) -> VehicleGeometry:
        return VehicleGeometry(wheelbase=self.wheelbase, cam_offset=self.cam_offset,
                               cam_pitch=math.radians(self.cam_pitch_deg))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        import yaml

        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InvalidInputError(f"bad experiment config: {exc}") from exc


class ScriptedOperator:
    """Pure-pursuit stand-in for the human operator (steer output bounded)."""

    def __init__(self, track: Track, geom: VehicleGeometry, lookahead: float = 1.2):
        if lookahead <= 0:
            raise InvalidInputError("lookahead must be > 0")
        self.track = track
        self.geom = geom
        self.lookahead = lookahead

    def steer(self, x: float, y: float, psi: float) -> float:
        fwd = np.array([math.sin(psi), math.cos(psi)])
        right = np.array([math.cos(psi), -math.sin(psi)])
        s = self.track.progress((x, y))
        target = self.track.point_at(min(s + self.lookahead, self.track.length))
        rel = target - np.array([x, y])
        ty = float(rel @ fwd)
        tx = float(rel @ right)
        ld = math.hypot(tx, ty)
        if ld < 1e-6:
            return 0.0
        alpha = math.atan2(tx, ty)
        delta = math.atan2(2.0 * self.geom.wheelbase * math.sin(alpha), ld)
        limit = math.radians(35.0)
        return min(max(delta, -limit), limit)


class VehicleNode:
    """Plant + hold-and-apply actuation + watchdog + frame source.

    ``direct_drive`` models the driver physically in the vehicle: commands
    actuate immediately and there is no link watchdog. Alongside the true
    plant a kinematic shadow pose is integrated from the same applied inputs
    (the predictor model run open loop); its divergence from the plant is
    the model-mismatch signal reported as prediction RMSE.
    """

    def __init__(self, cfg: ExperimentConfig, track: Track, delay_window: DelayWindow):
        self.cfg = cfg
        self.geom = cfg.geometry
        start = track.point_at(0.0)
        self.state = PlantState(x=float(start[0]), y=float(start[1]),
                                psi=track.heading_at(0.0), v=cfg.speed)
        self.model_state = self.state
        self.direct_drive = cfg.mode == "in_vehicle"
        self.delay_window = delay_window
        self.hold_queue: list = []  # (apply_at, steer), FIFO by arrival
        self.current_steer = 0.0
        self.last_receive_ts = 0.0
        self.last_est: PercentileEstimate | None = None
        self.seq = 0
        self.emergency = False
        self.n_emergency = 0
        self.n_late = 0
        self.n_cmds = 0
        self.capture_poses: dict[int, tuple] = {}

    def receive_command(self, cmd: CommandMsg, now: float):
        self.n_cmds += 1
        self.delay_window.record(now, max(now - cmd.ts_station, 0.0))
        self.last_receive_ts = now
        self.last_est = PercentileEstimate(p95=cmd.p95, p999=cmd.p999, fitted_at=now)
        if self.direct_drive:
            apply_at = now
        else:
            apply_at = schedule_actuation(cmd.ts_station, self.last_est)
            if apply_at <= now:
                self.n_late += 1  # stale-but-latest command: apply immediately
                apply_at = now
        self.hold_queue.append((apply_at, cmd.steer))
        if self.emergency:
            self.emergency = False

    def substep(self, now: float):
        """One 1 ms plant substep with watchdog and cruise control.

        Starvation is measured from the last command's receive time: the
        vehicle's clock is the only one it can trust, and the transport
        offset is already absorbed by hold-and-apply.
        """
        while self.hold_queue and self.hold_queue[0][0] <= now:
            _, self.current_steer = self.hold_queue.pop(0)
        if not self.direct_drive and not self.emergency and self.n_cmds > 0:
            if watchdog_check(self.last_receive_ts, now, self.last_est) == "emergency_stop":
                self.emergency = True
                self.n_emergency += 1
        if self.emergency:
            accel = -EMERGENCY_DECEL if self.state.v > 0 else 0.0
        else:
            accel = min(max((self.cfg.speed - self.state.v) / 0.5, -EMERGENCY_DECEL), 1.5)
        self.state = plant_step(self.state, self.current_steer, accel, PLANT_DT,
                                self.geom, slip=self.cfg.slip)
        self.model_state = plant_step(self.model_state, self.current_steer, accel,
                                      PLANT_DT, self.geom, slip=1.0)
        self._accel = accel

    def capture_frame(self, now: float) -> FrameMsg:
        self.seq += 1
        self.capture_poses[self.seq] = (self.state.x, self.state.y, self.state.psi)
        return FrameMsg(seq=self.seq, t0_capture=now, speed=self.state.v,
                        accel=getattr(self, "_accel", 0.0),
                        fov_h=math.radians(90.0), fov_v=math.radians(60.0),
                        pitch=self.geom.cam_pitch)


class StationNode:
    """Delay bookkeeping + forecast + operator command generation."""

    def __init__(self, cfg: ExperimentConfig, operator: ScriptedOperator,
                 delay_window: DelayWindow):
        self.cfg = cfg
        self.geom = cfg.geometry
        self.operator = operator
        self.delay_window = delay_window
        self.history = SteerHistory(retention=2.0)
        self.estimate = PercentileEstimate(p95=0.1, p999=WATCHDOG_CAP_S, fitted_at=0.0)
        self.newest_t0 = -1.0
        self.display_log: list = []  # (t, x, y, psi) as shown to the operator
        self.latency_log: list = []  # (t, tau1, p95)
        self.forecasts: list = []  # (t_pred, x, y, psi) predicted realizations
        self.dropped_stale = 0

    def refresh(self, now: float):
        self.estimate = refresh_percentiles(self.delay_window, now, self.estimate)

    def on_frame(self, msg: FrameMsg, now: float, capture_pose: tuple):
        if msg.t0_capture <= self.newest_t0:
            self.dropped_stale += 1
            return
        self.newest_t0 = msg.t0_capture
        tau1 = now - msg.t0_capture
        p95 = self.estimate.p95
        bk = DelayBookkeeping(t0=msg.t0_capture, t1=now, tau2=p95)
        x, y, psi = capture_pose
        if self.cfg.pp_enabled:
            axle = forecast_axle(bk, self.history, msg.speed, msg.accel, p95, self.geom)
            x, y, psi = compose_pose(x, y, psi, axle)
            self.forecasts.append((now + p95, x, y, psi))
        if self.cfg.mode != "in_vehicle":
            self.display_log.append((now, x, y, psi))
        self.latency_log.append((now, tau1, p95))

    def observe_direct(self, now: float, state: PlantState):
        """In-vehicle perception: the driver sees the true pose continuously,
        without the 30 Hz frame quantization of the video path."""
        self.display_log.append((now, state.x, state.y, state.psi))

    def displayed_pose_at(self, t: float):
        """Latest display no newer than t (models operator reaction delay)."""
        log = self.display_log
        for i in range(len(log) - 1, -1, -1):
            if log[i][0] <= t:
                return log[i][1:]
        return None

    def command(self, now: float) -> CommandMsg | None:
        pose = self.displayed_pose_at(now - self.cfg.reaction_delay)
        if pose is None:
            return None
        steer = self.operator.steer(*pose)
        self.history.append(now, steer)
        return CommandMsg(steer=steer, ts_station=now,
                          p95=self.estimate.p95, p999=self.estimate.p999)


def compose_pose(x: float, y: float, psi: float, delta: AxlePose):
    """Apply a body-frame pose change (X right, Z forward) to a world pose."""
    return (x + delta.z * math.sin(psi) + delta.x * math.cos(psi),
            y + delta.z * math.cos(psi) - delta.x * math.sin(psi),
            psi + delta.psi)


@dataclass
class ExperimentReport:
    config: dict
    rms_deviation: float
    rms_deviation_sections: dict
    lateral_oscillations: int
    prediction_rmse: dict | None
    forecast_rmse: dict | None
    late_rate: float
    n_emergency: int
    dropped_stale: int
    n_frames: int
    n_commands: int
    mean_tau1: float
    mean_p95: float
    duration: float
    completed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def count_oscillations(signed_errors: np.ndarray, threshold: float = 0.05) -> int:
    """Sign alternations of the lateral error with both lobes above threshold."""
    sig = signed_errors[np.abs(signed_errors) > threshold]
    if sig.size == 0:
        return 0
    signs = np.sign(sig)
    return int(np.sum(signs[1:] != signs[:-1]))


def compute_rmse(points: np.ndarray, track: Track, times=None, sections=None):
    """RMS centerline deviation over (N, 2) forward-point samples (and sections)."""
    if points.size == 0:
        raise InvalidInputError("no pose samples")
    dev = track.deviation_many(points)
    out = {"all": float(np.sqrt(np.mean(dev**2)))}
    if sections and times is not None:
        times = np.asarray(times)
        for lo, hi in sections:
            m = (times >= lo) & (times <= hi)
            if np.any(m):
                out[f"{lo:g}-{hi:g}s"] = float(np.sqrt(np.mean(dev[m] ** 2)))
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run one closed-loop lap; deterministic given the config (incl. seed)."""
    track = make_track(cfg.track)
    geom = cfg.geometry
    window = DelayWindow(capacity=500)
    operator = ScriptedOperator(track, geom, lookahead=cfg.lookahead)
    vehicle = VehicleNode(cfg, track, window)
    station = StationNode(cfg, operator, window)
    downlink = DelayedChannel(make_delay_source(cfg.downlink, seed=cfg.seed * 2 + 1))
    uplink = DelayedChannel(make_delay_source(cfg.uplink, seed=cfg.seed * 2 + 2))

    t = 0.0
    next_frame = 0.0
    next_cmd = 0.0
    next_fit = REFIT_PERIOD
    n_steps_max = int(cfg.max_duration / PLANT_DT)
    truth_t, truth_pose = [], []  # 100 Hz ground truth for forecast scoring
    model_pose = []  # open-loop kinematic shadow, same cadence as truth
    sample_t, sample_fp = [], []  # 50 Hz forward-point metric samples
    signed_lat = []
    completed = False

    for step in range(n_steps_max):
        t = step * PLANT_DT

        for raw, _delay in downlink.poll(t):
            msg = decode_frame(raw)
            station.on_frame(msg, t, vehicle.capture_poses[msg.seq])
        for raw, _delay in uplink.poll(t):
            vehicle.receive_command(decode_command(raw), t)

        if t >= next_fit:
            station.refresh(t)
            next_fit += REFIT_PERIOD
        if t >= next_cmd:
            if vehicle.direct_drive:
                station.observe_direct(t, vehicle.state)
            cmd = station.command(t)
            if cmd is not None:
                uplink.send(encode_command(cmd), t)
            fp = forward_point(vehicle.state, geom)
            sample_t.append(t)
            sample_fp.append(fp)
            signed_lat.append(_signed_deviation(fp, vehicle.state.psi, track))
            next_cmd += 1.0 / COMMAND_HZ
        if t >= next_frame:
            downlink.send(encode_frame(vehicle.capture_frame(t)), t)
            next_frame += 1.0 / FRAME_HZ

        vehicle.substep(t)

        if step % 10 == 0:
            truth_t.append(t)
            truth_pose.append((vehicle.state.x, vehicle.state.y, vehicle.state.psi))
            model_pose.append((vehicle.model_state.x, vehicle.model_state.y,
                               vehicle.model_state.psi))
        if step % 100 == 0:
            if track.progress((vehicle.state.x, vehicle.state.y)) >= track.length - 2.0:
                completed = True
                break

    sample_fp = np.asarray(sample_fp) if sample_fp else np.zeros((0, 2))
    rmse = compute_rmse(sample_fp, track, times=sample_t,
                        sections=[tuple(s) for s in cfg.sections])
    forecast_rmse = _forecast_rmse(station.forecasts, np.asarray(truth_t),
                                   np.asarray(truth_pose))
    pred_rmse = _model_divergence_rmse(np.asarray(truth_pose),
                                       np.asarray(model_pose))
    lat = np.asarray(signed_lat)
    report = ExperimentReport(
        config={**asdict_config(cfg)},
        rms_deviation=rmse["all"],
        rms_deviation_sections={k: v for k, v in rmse.items() if k != "all"},
        lateral_oscillations=count_oscillations(lat),
        prediction_rmse=pred_rmse,
        forecast_rmse=forecast_rmse,
        late_rate=vehicle.n_late / max(vehicle.n_cmds, 1),
        n_emergency=vehicle.n_emergency,
        dropped_stale=station.dropped_stale,
        n_frames=vehicle.seq,
        n_commands=vehicle.n_cmds,
        mean_tau1=float(np.mean([x[1] for x in station.latency_log])) if station.latency_log else 0.0,
        mean_p95=float(np.mean([x[2] for x in station.latency_log])) if station.latency_log else 0.0,
        duration=t,
        completed=completed,
    )
    if out_dir is not None:
        _write_logs(out_dir, cfg, report, sample_t, sample_fp, track,
                    station.latency_log)
    return report


def asdict_config(cfg: ExperimentConfig) -> dict:
    d = dict(cfg.__dict__)
    d["sections"] = [list(s) for s in d.get("sections", [])]
    return d


def _signed_deviation(fp, psi, track: Track) -> float:
    """Deviation with sign: positive when the forward point is right of the line."""
    dev = track.deviation(fp)
    s = track.progress(fp)
    center = track.point_at(s)
    h = track.heading_at(s)
    rel = np.asarray(fp) - center
    side = rel[0] * math.cos(h) - rel[1] * math.sin(h)  # component along track-right
    return dev if side >= 0 else -dev


def _model_divergence_rmse(truth_pose, model_pose):
    """Prediction-model mismatch: RMSE between the open-loop kinematic shadow
    and the realized plant, decomposed in the realized heading frame. With a
    matched plant this is numerically zero; lateral slip accumulates here.
    """
    if truth_pose.size == 0 or model_pose.shape != truth_pose.shape:
        return None
    ex = model_pose[:, 0] - truth_pose[:, 0]
    ey = model_pose[:, 1] - truth_pose[:, 1]
    pr = truth_pose[:, 2]
    fwd = ex * np.sin(pr) + ey * np.cos(pr)
    lat = ex * np.cos(pr) - ey * np.sin(pr)
    yaw = np.array([_wrap_angle(d) for d in model_pose[:, 2] - truth_pose[:, 2]])
    return {
        "lateral": float(np.sqrt(np.mean(lat**2))),
        "forward": float(np.sqrt(np.mean(fwd**2))),
        "yaw": float(np.sqrt(np.mean(yaw**2))),
        "n": int(truth_pose.shape[0]),
    }


def _forecast_rmse(forecasts, truth_t, truth_pose):
    """Lateral/forward/yaw RMSE of forecast poses vs realized poses."""
    if not forecasts or truth_t.size < 2:
        return None
    lat, fwd, yaw = [], [], []
    for t_pred, x, y, psi in forecasts:
        if t_pred > truth_t[-1]:
            continue
        xr = np.interp(t_pred, truth_t, truth_pose[:, 0])
        yr = np.interp(t_pred, truth_t, truth_pose[:, 1])
        pr = np.interp(t_pred, truth_t, truth_pose[:, 2])
        ex, ey = x - xr, y - yr
        fwd.append(ex * math.sin(pr) + ey * math.cos(pr))
        lat.append(ex * math.cos(pr) - ey * math.sin(pr))
        yaw.append(_wrap_angle(psi - pr))
    if not lat:
        return None
    return {
        "lateral": float(np.sqrt(np.mean(np.square(lat)))),
        "forward": float(np.sqrt(np.mean(np.square(fwd)))),
        "yaw": float(np.sqrt(np.mean(np.square(yaw)))),
        "n": len(lat),
    }


def _write_logs(out_dir, cfg, report, sample_t, sample_fp, track, latency_log):
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.track}_{cfg.mode}_seed{cfg.seed}"
    (out / f"{stem}_report.json").write_text(report.to_json())
    if len(sample_fp):
        dev = track.deviation_many(np.asarray(sample_fp))
        rows = np.column_stack([sample_t, np.asarray(sample_fp), dev])
        np.savetxt(out / f"{stem}_deviations.csv", rows, delimiter=",",
                   header="t,x,y,deviation", comments="", fmt="%.6f")
    if latency_log:
        np.savetxt(out / f"{stem}_latency.csv", np.asarray(latency_log),
                   delimiter=",", header="t,tau1,p95", comments="", fmt="%.6f")
