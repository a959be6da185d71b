"""Deterministic synthetic 3-D world and vehicle plant.

Renders ground-truth RGB+depth at any camera pose by ray casting against
analytic primitives (textured ground plane, boxes, poles), defines the test
tracks, and measures centerline deviation. This module is both the
simulator's camera and the independent oracle for the projection warp.

World frame: x east, y north, z up. Heading is measured clockwise from
north so a right turn is positive, matching the image-aligned vehicle frame
(X lateral right, Z forward).
"""

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .depth_codec import DepthMap
from .errors import InvalidInputError
from .motion import MAX_STEER_RAD, VehicleGeometry
from .projection import RgbImage

SKY = np.array([135, 178, 235], dtype=np.float64)
GROUND_A = np.array([92, 92, 92], dtype=np.float64)
GROUND_B = np.array([138, 138, 138], dtype=np.float64)
STRIPE = np.array([235, 235, 235], dtype=np.float64)
FORWARD_POINT_OFFSET = 0.8  # meters beyond the front axle


def _fwd(psi):
    return np.array([math.sin(psi), math.cos(psi)])


def _right(psi):
    return np.array([math.cos(psi), -math.sin(psi)])


class Track:
    """Centerline polyline (densely sampled, arc-length parameterized)."""

    def __init__(self, points, name: str):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise InvalidInputError("track needs at least two centerline points")
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        keep = np.concatenate(([True], seglen > 1e-12))
        self.points = pts[keep]
        seg = np.diff(self.points, axis=0)
        self._seg = seg
        self._seglen = np.hypot(seg[:, 0], seg[:, 1])
        self.s = np.concatenate(([0.0], np.cumsum(self._seglen)))
        self.length = float(self.s[-1])
        self.name = name

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        x = np.interp(s, self.s, self.points[:, 0])
        y = np.interp(s, self.s, self.points[:, 1])
        return np.array([x, y])

    def heading_at(self, s: float) -> float:
        i = min(np.searchsorted(self.s, min(max(s, 0.0), self.length), side="right") - 1,
                len(self._seg) - 1)
        dx, dy = self._seg[max(i, 0)]
        return math.atan2(dx, dy)  # clockwise from north

    def deviation(self, point) -> float:
        """Minimum Euclidean distance from a point to the centerline."""
        return float(self.deviation_many(np.asarray(point, dtype=np.float64)[None, :])[0])

    def deviation_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized min distance for (N, 2) query points."""
        p0 = self.points[:-1]
        d = self._seg
        ll = np.maximum(self._seglen**2, 1e-30)
        rel = points[:, None, :] - p0[None, :, :]
        t = np.clip((rel * d[None, :, :]).sum(-1) / ll[None, :], 0.0, 1.0)
        closest = p0[None, :, :] + t[:, :, None] * d[None, :, :]
        dist = np.hypot(points[:, None, 0] - closest[:, :, 0],
                        points[:, None, 1] - closest[:, :, 1])
        return dist.min(axis=1)

    def progress(self, point) -> float:
        """Arc length of the closest centerline point (for lap completion)."""
        p0 = self.points[:-1]
        d = self._seg
        ll = np.maximum(self._seglen**2, 1e-30)
        rel = np.asarray(point, dtype=np.float64) - p0
        t = np.clip((rel * d).sum(-1) / ll, 0.0, 1.0)
        closest = p0 + t[:, None] * d
        dist = np.hypot(*(np.asarray(point) - closest).T)
        i = int(np.argmin(dist))
        return float(self.s[i] + t[i] * self._seglen[i])


def _arc_points(pos, psi, radius, sweep, direction, ds=0.05):
    """Sampled arc from (pos, psi); direction +1 right, -1 left. Returns (points, end psi)."""
    n = max(int(abs(sweep) * radius / ds), 8)
    alphas = np.linspace(0.0, sweep, n + 1)[1:]
    center = pos + radius * direction * _right(psi)
    pts = [center - radius * direction * _right(psi + direction * a) for a in alphas]
    return pts, psi + direction * sweep


def make_track(name: str) -> Track:
    """Test tracks: R7-80deg left turn, R5-120deg left turn, double lane change."""
    ds = 0.05
    pos = np.array([0.0, 0.0])
    psi = 0.0
    pts = [pos.copy()]

    def straight(length):
        nonlocal pos
        n = max(int(length / ds), 2)
        for t in np.linspace(0.0, length, n + 1)[1:]:
            pts.append(pos + t * _fwd(psi))
        pos = pts[-1].copy()

    def turn(radius, sweep_deg, direction):
        nonlocal pos, psi
        arc, new_psi = _arc_points(pos, psi, radius, math.radians(sweep_deg), direction, ds)
        pts.extend(arc)
        pos, psi = pts[-1].copy(), new_psi

    if name == "r7_80":
        straight(15.0)
        turn(7.0, 80.0, -1)
        straight(15.0)
    elif name == "r5_120":
        straight(15.0)
        turn(5.0, 120.0, -1)
        straight(15.0)
    elif name == "lane_change":
        straight(10.0)
        # 3.5 m lateral offset (to the left) over 25 m, cosine blend, then back
        for leg, sign in ((25.0, 1.0), (5.0, 0.0), (25.0, -1.0)):
            base = pos.copy()
            n = max(int(leg / ds), 2)
            for t in np.linspace(0.0, leg, n + 1)[1:]:
                if sign == 0.0:
                    lat = 0.0
                else:
                    lat = sign * 3.5 * (1.0 - math.cos(math.pi * t / leg)) / 2.0
                pts.append(base + t * _fwd(psi) + lat * -_right(psi))
            pos = pts[-1].copy()
        straight(10.0)
    else:
        raise InvalidInputError(f"unknown track {name!r}")
    return Track(np.array(pts), name)


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    wx: float
    wy: float
    height: float
    color: tuple


@dataclass(frozen=True)
class Pole:
    cx: float
    cy: float
    radius: float
    height: float
    color: tuple


@dataclass
class Scene:
    """Immutable world description: textured ground, boxes, poles, stripe polyline."""

    boxes: list
    poles: list
    stripe: np.ndarray | None = None  # (N, 2) centerline to paint on the ground
    checker: float = 1.0
    stripe_halfwidth: float = 0.12

    def to_config(self, path):
        data = {
            "checker": self.checker,
            "stripe_halfwidth": self.stripe_halfwidth,
            "boxes": [[b.cx, b.cy, b.wx, b.wy, b.height, list(b.color)] for b in self.boxes],
            "poles": [[p.cx, p.cy, p.radius, p.height, list(p.color)] for p in self.poles],
            "stripe": None if self.stripe is None else np.asarray(self.stripe).tolist(),
        }
        with open(path, "w") as fh:
            yaml.safe_dump(data, fh)

    @classmethod
    def from_config(cls, path) -> "Scene":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls(
            boxes=[Box(*b[:5], tuple(b[5])) for b in data.get("boxes", [])],
            poles=[Pole(*p[:4], tuple(p[4])) for p in data.get("poles", [])],
            stripe=None if data.get("stripe") is None else np.asarray(data["stripe"]),
            checker=data.get("checker", 1.0),
            stripe_halfwidth=data.get("stripe_halfwidth", 0.12),
        )


def build_scene(track: Track | None = None, seed: int = 0,
                n_boxes: int = 10, n_poles: int = 8) -> Scene:
    """Deterministic scene with primitives placed clear of the track corridor."""
    rng = np.random.default_rng(seed)
    boxes, poles = [], []
    if track is None:
        spine = Track([[0.0, -50.0], [0.0, 200.0]], "spine")
    else:
        spine = track
    for i in range(n_boxes):
        s = spine.length * (i + 0.5) / n_boxes
        p = spine.point_at(s)
        psi = spine.heading_at(s)
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        offset = rng.uniform(4.5, 8.0)
        c = p + side * offset * _right(psi)
        w = rng.uniform(1.5, 3.5)
        color = tuple(int(v) for v in rng.integers(60, 220, size=3))
        boxes.append(Box(float(c[0]), float(c[1]), w, rng.uniform(1.5, 3.5),
                         rng.uniform(2.0, 5.0), color))
    for i in range(n_poles):
        s = spine.length * (i + 0.5) / n_poles
        p = spine.point_at(s)
        psi = spine.heading_at(s)
        side = -1.0 if i % 2 else 1.0
        c = p + side * 3.2 * _right(psi)
        poles.append(Pole(float(c[0]), float(c[1]), 0.08, 3.0, (40, 40, 48)))
    stripe = None if track is None else track.points
    return Scene(boxes=boxes, poles=poles, stripe=stripe)


@dataclass(frozen=True)
class CameraPose:
    """World camera pose: position, heading (clockwise from north), pitch down."""

    x: float
    y: float
    height: float
    heading: float
    pitch: float = 0.0


def render(scene: Scene, cam: CameraPose, width: int, height: int,
           fov_h: float, fov_v: float):
    """Ray-cast RGB and optical-axis depth at the camera pose. Deterministic."""
    if not (0 < fov_h < math.pi and 0 < fov_v < math.pi):
        raise InvalidInputError("FOVs must be in (0, pi)")
    if width <= 0 or height <= 0:
        raise InvalidInputError("image dimensions must be positive")
    psi, th = cam.heading, cam.pitch
    f3 = np.array([math.sin(psi) * math.cos(th), math.cos(psi) * math.cos(th), -math.sin(th)])
    r3 = np.array([math.cos(psi), -math.sin(psi), 0.0])
    d3 = np.array([-math.sin(psi) * math.sin(th), -math.cos(psi) * math.sin(th), -math.cos(th)])
    origin = np.array([cam.x, cam.y, cam.height])

    xd_hat = np.arange(1, width + 1, dtype=np.float64) - (width / 2 + 0.5)
    yd_hat = np.arange(1, height + 1, dtype=np.float64) - (height / 2 + 0.5)
    ax = xd_hat * (math.tan(fov_h / 2) / (width / 2))
    ay = yd_hat * (math.tan(fov_v / 2) / (height / 2))
    axg, ayg = np.meshgrid(ax, ay)
    # direction per pixel; camera-frame z component is exactly 1, so the ray
    # parameter t equals optical-axis depth
    dirs = (r3[None, None, :] * axg[:, :, None]
            + d3[None, None, :] * ayg[:, :, None]
            + f3[None, None, :])

    t_best = np.full((height, width), np.inf)
    rgb = np.empty((height, width, 3), dtype=np.float64)
    rgb[:] = SKY

    dz = dirs[:, :, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dz < -1e-12, -origin[2] / dz, np.inf)
    hit = t_ground < t_best
    if np.any(hit):
        tg = np.where(np.isfinite(t_ground), t_ground, 0.0)
        gx = origin[0] + tg * dirs[:, :, 0]
        gy = origin[1] + tg * dirs[:, :, 1]
        checker = ((np.floor(gx / scene.checker) + np.floor(gy / scene.checker)) % 2) == 0
        gcol = np.where(checker[:, :, None], GROUND_A, GROUND_B)
        if scene.stripe is not None and len(scene.stripe) >= 2:
            pts = np.stack([gx[hit], gy[hit]], axis=-1)
            dist = _polyline_distance(pts, scene.stripe)
            on = dist <= scene.stripe_halfwidth
            sub = gcol[hit]
            sub[on] = STRIPE
            gcol[hit] = sub
        rgb[hit] = gcol[hit]
        t_best[hit] = t_ground[hit]

    for b in scene.boxes:
        _cast_box(b, origin, dirs, t_best, rgb)
    for p in scene.poles:
        _cast_pole(p, origin, dirs, t_best, rgb)

    depth = np.where(np.isfinite(t_best), t_best, np.nan)
    return RgbImage(np.clip(rgb + 0.5, 0, 255).astype(np.uint8)), \
        DepthMap(depth, fov_h=fov_h, fov_v=fov_v)


def _polyline_distance(pts, poly):
    """Min distance from (N, 2) points to a polyline, chunked to bound memory."""
    poly = np.asarray(poly, dtype=np.float64)
    p0 = poly[:-1]
    seg = np.diff(poly, axis=0)
    ll = np.maximum((seg**2).sum(-1), 1e-30)
    out = np.empty(pts.shape[0])
    step = max(1, 2_000_000 // max(len(p0), 1))
    for i in range(0, pts.shape[0], step):
        q = pts[i:i + step]
        rel = q[:, None, :] - p0[None, :, :]
        t = np.clip((rel * seg[None, :, :]).sum(-1) / ll[None, :], 0.0, 1.0)
        c = p0[None, :, :] + t[:, :, None] * seg[None, :, :]
        d = np.hypot(q[:, None, 0] - c[:, :, 0], q[:, None, 1] - c[:, :, 1])
        out[i:i + step] = d.min(axis=1)
    return out


def _cast_box(b: Box, origin, dirs, t_best, rgb):
    lo = np.array([b.cx - b.wx / 2, b.cy - b.wy / 2, 0.0])
    hi = np.array([b.cx + b.wx / 2, b.cy + b.wy / 2, b.height])
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (lo[None, None, :] - origin[None, None, :]) * inv
    t2 = (hi[None, None, :] - origin[None, None, :]) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    t_enter = tmin.max(axis=2)
    t_exit = tmax.min(axis=2)
    hit = (t_enter <= t_exit) & (t_enter > 1e-9) & (t_enter < t_best)
    if not np.any(hit):
        return
    axis = np.argmax(tmin, axis=2)
    shade = np.choose(axis, [0.82, 0.68, 1.0])
    col = np.asarray(b.color, dtype=np.float64)
    rgb[hit] = col[None, :] * shade[hit][:, None]
    t_best[hit] = t_enter[hit]


def _cast_pole(p: Pole, origin, dirs, t_best, rgb):
    ox, oy = origin[0] - p.cx, origin[1] - p.cy
    dx, dy = dirs[:, :, 0], dirs[:, :, 1]
    a = dx * dx + dy * dy
    bq = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - p.radius**2
    disc = bq * bq - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = (-bq - sq) / (2 * a)
    z = origin[2] + t * dirs[:, :, 2]
    hit = (disc > 0) & (t > 1e-9) & (t < t_best) & (z >= 0.0) & (z <= p.height)
    if not np.any(hit):
        return
    rgb[hit] = np.asarray(p.color, dtype=np.float64)
    t_best[hit] = t[hit]


@dataclass(frozen=True)
class PlantState:
    """True vehicle state: rear-axle world pose and speed."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 0.0


def plant_step(s: PlantState, steer: float, accel: float, dt: float,
               geom: VehicleGeometry, slip: float = 1.0) -> PlantState:
    """Kinematic plant update, same closed-form arc as the motion predictor.

    ``slip`` < 1 scales the yaw rate to emulate unmodeled lateral slip
    (under-steer): the plant turns less than the kinematic model predicts,
    so in the small-angle regime lateral displacement scales by ~slip.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be > 0")
    delta = min(max(steer, -MAX_STEER_RAD), MAX_STEER_RAD)
    v_mid = max(s.v + accel * 0.5 * dt, 0.0)
    dpsi = slip * v_mid * math.tan(delta) / geom.wheelbase * dt
    half = 0.5 * dpsi
    sinc = math.sin(half) / half if abs(half) > 1e-30 else 1.0
    chord = v_mid * dt * sinc
    return PlantState(
        x=s.x + chord * math.sin(s.psi + half),
        y=s.y + chord * math.cos(s.psi + half),
        psi=s.psi + dpsi,
        v=max(s.v + accel * dt, 0.0),
    )


def forward_point(s: PlantState, geom: VehicleGeometry,
                  offset: float = FORWARD_POINT_OFFSET) -> np.ndarray:
    """Forward-most point: wheelbase + offset ahead of the rear axle."""
    d = geom.wheelbase + offset
    return np.array([s.x + d * math.sin(s.psi), s.y + d * math.cos(s.psi)])


def camera_world_pose(s: PlantState, geom: VehicleGeometry,
                      cam_height: float = 1.6) -> CameraPose:
    """World pose of the vehicle camera (cam_offset ahead of the rear axle)."""
    return CameraPose(
        x=s.x + geom.cam_offset * math.sin(s.psi),
        y=s.y + geom.cam_offset * math.cos(s.psi),
        height=cam_height,
        heading=s.psi,
        pitch=geom.cam_pitch,
    )
