"""Forward-warping of a delayed RGB+depth frame into a forecast camera pose.

Pipeline: depth map -> point cloud -> rigid transform (yaw/translation
conjugated by the camera pitch) -> reprojection -> per-pixel scaling with
far-to-near painting -> validity mask -> fast-marching inpainting of the
revealed (null) pixels.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..depth_codec import DepthMap
from ..errors import InvalidInputError
from ..motion import PoseDelta, VehicleGeometry
from ._kernels import COMPILED, get_backend, paint_spans, telea_inpaint

Z_NEAR = 0.2  # transformed points closer than this are dropped (reprojection diverges)
DEFAULT_INPAINT_RADIUS = 5


@dataclass
class RgbImage:
    """(H, W, 3) uint8 image, dimensions matching its companion DepthMap."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or self.data.shape[2] != 3 or self.data.size == 0:
            raise InvalidInputError("rgb image must be non-empty (H, W, 3)")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class PointCloud:
    """Per-pixel camera-frame points (x right, y down, z forward), flattened row-major.

    Provenance is positional: entry i came from source pixel (i // W, i % W).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    valid: np.ndarray
    width: int
    height: int
    fov_h: float
    fov_v: float


@dataclass(frozen=True)
class WarpTransform:
    """4x4 homogeneous transform with orthonormal rotation block."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidInputError("transform must be 4x4")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise InvalidInputError("rotation block must be orthonormal")
        if not math.isclose(float(np.linalg.det(r)), 1.0, abs_tol=1e-9):
            raise InvalidInputError("rotation block must have determinant +1")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidInputError("last row must be (0, 0, 0, 1)")
        object.__setattr__(self, "matrix", m)


@dataclass
class WarpedFrame:
    """Warp output: color, warped depth, and the validity (non-null) mask."""

    rgb: RgbImage
    new_depth: DepthMap
    valid_mask: np.ndarray


def depth_to_points(dm: DepthMap) -> PointCloud:
    """Unproject a depth map through the pinhole model given by its FOVs."""
    if not (dm.fov_h > 0 and dm.fov_v > 0):
        raise InvalidInputError("depth map must carry positive fov_h/fov_v")
    h, w = dm.height, dm.width
    # 1-based pixel indices recentered on the optical axis
    xd_hat = np.arange(1, w + 1, dtype=np.float64) - (w / 2 + 0.5)
    yd_hat = np.arange(1, h + 1, dtype=np.float64) - (h / 2 + 0.5)
    kx = math.tan(dm.fov_h / 2) / (w / 2)
    ky = math.tan(dm.fov_v / 2) / (h / 2)
    z = dm.data.reshape(-1)
    xx = np.tile(xd_hat * kx, h)
    yy = np.repeat(yd_hat * ky, w)
    valid = np.isfinite(z)
    zs = np.where(valid, z, 0.0)
    return PointCloud(x=zs * xx, y=zs * yy, z=zs, valid=valid,
                      width=w, height=h, fov_h=dm.fov_h, fov_v=dm.fov_v)


def make_transform(delta: PoseDelta, geom: VehicleGeometry) -> WarpTransform:
    """Homogeneous transform mapping old-camera coordinates to the new camera.

    Yaw about the camera y axis (right turns positive) plus the in-plane
    translation, conjugated by the mounting pitch so the warp is correct for
    a camera pointing slightly downward.
    """
    cp, sp = math.cos(delta.dpsi_cam), math.sin(delta.dpsi_cam)
    rot = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    d = np.array([delta.dx_cam, 0.0, delta.dz_cam])
    t = np.eye(4)
    t[:3, :3] = rot.T
    t[:3, 3] = -rot.T @ d
    theta = geom.cam_pitch
    if theta != 0.0:
        ct, st = math.cos(theta), math.sin(theta)
        r2 = np.array([[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]])
        b = np.eye(4)
        b[:3, :3] = r2
        bt = np.eye(4)
        bt[:3, :3] = r2.T
        t = b @ t @ bt
    return WarpTransform(t)


def transform_points(pc: PointCloud, t: WarpTransform, z_near: float = Z_NEAR,
                     workers: int = 1) -> PointCloud:
    """Apply the homogeneous transform; points at or behind z_near become invalid."""
    m = t.matrix

    def _apply(sl):
        x, y, z = pc.x[sl], pc.y[sl], pc.z[sl]
        xn = m[0, 0] * x + m[0, 1] * y + m[0, 2] * z + m[0, 3]
        yn = m[1, 0] * x + m[1, 1] * y + m[1, 2] * z + m[1, 3]
        zn = m[2, 0] * x + m[2, 1] * y + m[2, 2] * z + m[2, 3]
        return xn, yn, zn

    n = pc.x.size
    if workers > 1 and n > 4096:
        chunks = [slice(i, min(i + (n + workers - 1) // workers, n))
                  for i in range(0, n, (n + workers - 1) // workers)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_apply, chunks))
        xn = np.concatenate([p[0] for p in parts])
        yn = np.concatenate([p[1] for p in parts])
        zn = np.concatenate([p[2] for p in parts])
    else:
        xn, yn, zn = _apply(slice(None))
    valid = pc.valid & (zn > z_near)
    return PointCloud(x=xn, y=yn, z=zn, valid=valid, width=pc.width,
                      height=pc.height, fov_h=pc.fov_h, fov_v=pc.fov_v)


def points_to_pixels(pc: PointCloud):
    """Reproject points to 1-based pixel coordinates (x_new, y_new, z_new, in_frame).

    Out-of-frame and invalid points are flagged, not raised.
    """
    kx = (pc.width / 2) / math.tan(pc.fov_h / 2)
    ky = (pc.height / 2) / math.tan(pc.fov_v / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        xd = pc.x / pc.z * kx + (pc.width / 2 + 0.5)
        yd = pc.y / pc.z * ky + (pc.height / 2 + 0.5)
    in_frame = pc.valid & (xd >= 0.5) & (xd <= pc.width + 0.5) \
        & (yd >= 0.5) & (yd <= pc.height + 0.5)
    return xd, yd, pc.z, in_frame


def pixel_scale(z_old: float, z_new: float) -> float:
    """Per-pixel magnification S = z_old / z_new."""
    if z_new <= Z_NEAR:
        raise InvalidInputError("z_new at or behind the near cutoff")
    return z_old / z_new


def span_bounds(center: float, s: float):
    """Inclusive pixel span [floor(c - (S-1)/2), ceil(c + (S-1)/2)] of one pixel."""
    half = 0.5 * (s - 1.0)
    eps = 1e-7
    return math.floor(center - half + eps), math.ceil(center + half - eps)


def render_projection(rgb: RgbImage, dm: DepthMap, t: WarpTransform,
                      workers: int = 1) -> WarpedFrame:
    """Warp the frame through the transform with nearest-surface occlusion.

    Each source pixel paints a span of S x S target pixels, depth-tested so
    the nearest content wins (ties broken toward the larger source index,
    matching a far-to-near painter's pass). The result is deterministic
    regardless of worker count: workers only fan out the point transform;
    the paint is a single pass in source order.
    """
    if (rgb.height, rgb.width) != (dm.height, dm.width):
        raise InvalidInputError("rgb and depth dimensions must match")
    pc = depth_to_points(dm)
    moved = transform_points(pc, t, workers=workers)
    xd, yd, zn, _ = points_to_pixels(moved)
    out_rgb, out_depth, out_mask = paint_spans(
        np.ascontiguousarray(xd), np.ascontiguousarray(yd),
        np.ascontiguousarray(pc.z), np.ascontiguousarray(zn),
        np.ascontiguousarray(moved.valid.astype(np.uint8)),
        np.ascontiguousarray(rgb.data), rgb.height, rgb.width)
    return WarpedFrame(rgb=RgbImage(out_rgb),
                       new_depth=DepthMap(out_depth, fov_h=dm.fov_h, fov_v=dm.fov_v),
                       valid_mask=out_mask)


def inpaint(frame: WarpedFrame, radius: int = DEFAULT_INPAINT_RADIUS) -> RgbImage:
    """Fill mask-false (null) pixels by fast-marching inpainting."""
    known = frame.valid_mask
    if known.all():
        return RgbImage(frame.rgb.data.copy())
    if not known.any():
        warnings.warn("inpaint called with an all-false mask; uniform mean fill")
        mean = frame.rgb.data.reshape(-1, 3).mean(axis=0)
        out = np.empty_like(frame.rgb.data)
        out[:] = np.clip(mean + 0.5, 0, 255).astype(np.uint8)
        return RgbImage(out)
    filled = telea_inpaint(np.ascontiguousarray(frame.rgb.data),
                           np.ascontiguousarray(known.astype(np.uint8)), radius)
    return RgbImage(filled)


def project_frame(rgb: RgbImage, dm: DepthMap, delta: PoseDelta,
                  geom: VehicleGeometry, radius: int = DEFAULT_INPAINT_RADIUS,
                  workers: int = 1):
    """Full pipeline: warp into the forecast pose and inpaint the null pixels.

    Returns (output image, diagnostics WarpedFrame). A zero delta is an exact
    passthrough.
    """
    if delta.is_zero:
        warped = WarpedFrame(rgb=RgbImage(rgb.data.copy()),
                             new_depth=DepthMap(dm.data.copy(), dm.fov_h, dm.fov_v),
                             valid_mask=np.ones(dm.data.shape, dtype=bool))
        return RgbImage(rgb.data.copy()), warped
    t = make_transform(delta, geom)
    warped = render_projection(rgb, dm, t, workers=workers)
    return inpaint(warped, radius=radius), warped


__all__ = [
    "COMPILED", "Z_NEAR", "DEFAULT_INPAINT_RADIUS",
    "RgbImage", "PointCloud", "WarpTransform", "WarpedFrame",
    "depth_to_points", "make_transform", "transform_points", "points_to_pixels",
    "pixel_scale", "span_bounds", "render_projection", "inpaint", "project_frame",
    "get_backend", "paint_spans", "telea_inpaint",
]
