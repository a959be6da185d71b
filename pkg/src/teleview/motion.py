"""Camera pose forecasting over the round-trip delay.

Integrates the single-track kinematic model exactly over the steering
time-history covering the delay window, then converts the rear-axle pose
change into the camera-frame pose change used to warp the delayed frame.

Frame conventions: X lateral (right positive), Z forward, Psi yaw with
right turns positive. The axle pose integration always starts at (0, 0, 0).
"""

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MAX_STEER_RAD = math.radians(35.0)  # physical steering limit


@dataclass(frozen=True)
class VehicleGeometry:
    """Wheelbase, camera offset ahead of the rear axle, and camera pitch (down positive)."""

    wheelbase: float = 1.76
    cam_offset: float = 0.0
    cam_pitch: float = 0.0

    def __post_init__(self):
        if not (self.wheelbase > 0):
            raise InvalidInputError("wheelbase must be > 0")
        if self.cam_offset < 0:
            raise InvalidInputError("cam_offset must be >= 0 (camera ahead of rear axle)")


@dataclass(frozen=True)
class AxlePose:
    """Rear-axle pose change in the frame of the window start."""

    x: float = 0.0
    z: float = 0.0
    psi: float = 0.0


@dataclass(frozen=True)
class PoseDelta:
    """Camera displacement (lateral, forward, yaw) in the image-aligned frame."""

    dx_cam: float = 0.0
    dz_cam: float = 0.0
    dpsi_cam: float = 0.0

    def __post_init__(self):
        vals = (self.dx_cam, self.dz_cam, self.dpsi_cam)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("pose delta must be finite")
        if not (-math.pi < self.dpsi_cam <= math.pi):
            raise InvalidInputError("dpsi_cam must lie in (-pi, pi]")

    @property
    def is_zero(self) -> bool:
        return self.dx_cam == 0.0 and self.dz_cam == 0.0 and self.dpsi_cam == 0.0


@dataclass(frozen=True)
class DelayBookkeeping:
    """Timestamps and delays attached to one received frame.

    t0: capture time; t1: station receive time; tau1 = t1 - t0 (downlink),
    tau2: uplink estimate; tau = tau1 + tau2 is the forecast horizon.
    """

    t0: float
    t1: float
    tau2: float

    def __post_init__(self):
        if self.t1 < self.t0:
            raise InvalidInputError("receive time before capture time")
        if self.tau2 < 0:
            raise InvalidInputError("uplink delay must be >= 0")

    @property
    def tau1(self) -> float:
        return self.t1 - self.t0

    @property
    def tau(self) -> float:
        return self.tau1 + self.tau2


class SteerHistory:
    """Time-ordered front-wheel steer samples with a retention horizon."""

    def __init__(self, retention: float = 2.0):
        if retention < 2.0:
            raise InvalidInputError("retention horizon must be >= 2 s")
        self.retention = retention
        self._ts: list[float] = []
        self._deltas: list[float] = []

    def append(self, timestamp: float, delta: float):
        if self._ts and timestamp <= self._ts[-1]:
            raise InvalidInputError("steer timestamps must be strictly increasing")
        self._ts.append(timestamp)
        self._deltas.append(delta)
        cutoff = timestamp - self.retention
        drop = bisect_right(self._ts, cutoff) - 1  # keep one sample left of cutoff
        if drop > 0:
            del self._ts[:drop]
            del self._deltas[:drop]

    def __len__(self):
        return len(self._ts)

    def value_at(self, t: float) -> float:
        """Zero-order hold: steer of the latest sample at or before t."""
        if not self._ts:
            return 0.0
        i = bisect_right(self._ts, t) - 1
        return self._deltas[max(i, 0)]

    def sample_times_within(self, t_start: float, t_end: float) -> list[float]:
        lo = bisect_right(self._ts, t_start)
        hi = bisect_right(self._ts, t_end)
        ts = self._ts[lo:hi]
        if ts and ts[-1] == t_end:
            ts = ts[:-1]
        return ts


def window_history(h: SteerHistory, t_start: float, t_end: float):
    """Piecewise-constant (steer, dt) segments covering [t_start, t_end].

    The segment durations sum to exactly t_end - t_start; each segment holds
    the sample active at its start (zero-order hold, extrapolated at edges).
    Returns (segments, warned) where warned flags an empty history.
    """
    if not (t_start < t_end):
        raise InvalidInputError("window must have t_start < t_end")
    total = t_end - t_start
    if len(h) == 0:
        return [(0.0, total)], True
    bounds = [t_start] + h.sample_times_within(t_start, t_end) + [t_end]
    segments = []
    acc = 0.0
    for i in range(len(bounds) - 1):
        last = i == len(bounds) - 2
        dt = (total - acc) if last else (bounds[i + 1] - bounds[i])
        acc += dt
        if dt > 0:
            segments.append((h.value_at(bounds[i]), dt))
    return segments, False


def integrate_trajectory(segments, v0: float, a: float, geom: VehicleGeometry) -> AxlePose:
    """Exact integration of the single-track kinematic model.

    Each segment holds a constant steer; the segment's arc length uses the
    midpoint speed (second-order accurate under constant acceleration), with
    speed clamped at zero (no reverse prediction). The position update uses
    the chord form chord = v*dt*sinc(dpsi/2), which is the closed-form
    circular-arc solution and degrades gracefully to the straight-line branch
    as steer goes to 0.
    """
    if not all(math.isfinite(v) for v in (v0, a)):
        raise InvalidInputError("speed and acceleration must be finite")
    x = z = psi = 0.0
    t = 0.0
    L = geom.wheelbase
    for delta, dt in segments:
        if not (math.isfinite(delta) and math.isfinite(dt)) or dt < 0:
            raise InvalidInputError("segments must be finite with dt >= 0")
        delta = min(max(delta, -MAX_STEER_RAD), MAX_STEER_RAD)
        v_mid = max(v0 + a * (t + 0.5 * dt), 0.0)
        t += dt
        dpsi = v_mid * math.tan(delta) / L * dt
        half = 0.5 * dpsi
        sinc = math.sin(half) / half if abs(half) > 1e-30 else 1.0
        chord = v_mid * dt * sinc
        x += chord * math.sin(psi + half)
        z += chord * math.cos(psi + half)
        psi += dpsi
    return AxlePose(x=x, z=z, psi=psi)


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def camera_pose_change(axle: AxlePose, geom: VehicleGeometry) -> PoseDelta:
    """Camera displacement from the axle pose change (camera cam_offset ahead)."""
    c = geom.cam_offset
    return PoseDelta(
        dx_cam=axle.x + c * math.sin(axle.psi),
        dz_cam=axle.z - c * (1.0 - math.cos(axle.psi)),
        dpsi_cam=_wrap_angle(axle.psi),
    )


def forecast(frame: DelayBookkeeping, h: SteerHistory, v0: float, a: float,
             p95: float, geom: VehicleGeometry) -> PoseDelta:
    """Forecast the camera pose change over the frame's round-trip delay.

    Integrates the steering history over [t1 - (tau1 + p95), t1]; p95 is the
    hold-and-apply uplink estimate standing in for the unknown tau2.
    """
    tau = frame.tau1 + p95
    if tau <= 0:
        return PoseDelta()
    segments, _ = window_history(h, frame.t1 - tau, frame.t1)
    axle = integrate_trajectory(segments, v0, a, geom)
    return camera_pose_change(axle, geom)


def forecast_axle(frame: DelayBookkeeping, h: SteerHistory, v0: float, a: float,
                  p95: float, geom: VehicleGeometry) -> AxlePose:
    """Axle-frame counterpart of forecast (used for display-pose geometry)."""
    tau = frame.tau1 + p95
    if tau <= 0:
        return AxlePose()
    segments, _ = window_history(h, frame.t1 - tau, frame.t1)
    return integrate_trajectory(segments, v0, a, geom)


def evaluate_prediction_error(times, predicted, realized, sections=None):
    """Per-section RMSE between predicted and realized pose series.

    ``predicted`` and ``realized`` are (N, 3) arrays of (X, Y_lateral, Yaw)
    aligned on ``times``. Returns {section: {'x','y','yaw'} RMSE}; the whole
    series is reported under the key 'all'.
    """
    times = np.asarray(times, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    realized = np.asarray(realized, dtype=np.float64)
    if times.size == 0 or predicted.shape != realized.shape:
        raise InvalidInputError("series must be non-empty and time-aligned")
    err = predicted - realized
    out = {}
    spans = {"all": (times[0], times[-1])}
    if sections:
        spans.update({f"{lo:g}-{hi:g}s": (lo, hi) for lo, hi in sections})
    for name, (lo, hi) in spans.items():
        m = (times >= lo) & (times <= hi)
        if not np.any(m):
            continue
        rms = np.sqrt(np.mean(err[m] ** 2, axis=0))
        out[name] = {"x": float(rms[0]), "y": float(rms[1]), "yaw": float(rms[2])}
    if not out:
        raise InvalidInputError("no samples overlap the requested sections")
    return out
