"""Lossy 8-bit logarithmic depth encoding for bandwidth-constrained transport.

Metric depths in [d_min, d_max] map onto the full uint8 range with a
quantization step that grows linearly with depth, so close obstacles keep
centimeter resolution while the far field is coarse. Also provides the
bandwidth and quantization-error bookkeeping used to size the video links.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Invalid/unknown depth sentinel inside DepthMap data.
DEPTH_SENTINEL = np.nan


@dataclass(frozen=True)
class CodecParams:
    """Parameters of the logarithmic uint8 depth code.

    ``a`` and ``c`` are calibrated so that encode(d_min) = 0 and
    encode(d_max) = 255 with resolution increasing linearly in depth.
    """

    a: float = 0.0126194
    c: float = 364.92737
    d_min: float = 1.0
    d_max: float = 20.0
    overflow_mode: str = "saturate"  # "saturate" | "wrap" (uint8-overflow study mode)

    def __post_init__(self):
        if not (self.a > 0):
            raise InvalidInputError("codec parameter a must be > 0")
        if not (self.d_min < self.d_max):
            raise InvalidInputError("d_min must be < d_max")
        if self.overflow_mode not in ("saturate", "wrap"):
            raise InvalidInputError(f"unknown overflow_mode {self.overflow_mode!r}")

    @classmethod
    def from_file(cls, path) -> "CodecParams":
        """Load key/value codec config (YAML subset: ``key: value`` lines)."""
        import yaml

        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls(**raw)


@dataclass
class DepthMap:
    """H x W grid of metric depths along the optical axis, paired with an RGB image.

    ``data`` is (H, W) float, meters; unknown depth is NaN (DEPTH_SENTINEL).
    """

    data: np.ndarray
    fov_h: float
    fov_v: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.size == 0:
            raise InvalidInputError("depth map must be a non-empty 2-D grid")
        finite = np.isfinite(self.data)
        if np.any(self.data[finite] <= 0):
            raise InvalidInputError("finite depths must be > 0")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.data)


@dataclass
class EncodedDepthMap:
    """uint8 codes of a DepthMap, dimensions matching the companion image."""

    codes: np.ndarray
    fov_h: float = 0.0
    fov_v: float = 0.0

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.uint8)
        if self.codes.ndim != 2 or self.codes.size == 0:
            raise InvalidInputError("encoded depth map must be a non-empty 2-D grid")

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]


@dataclass(frozen=True)
class StreamSpec:
    """Shape of one raw video stream, for bandwidth accounting."""

    byte_depth: int
    height: int
    width: int
    channels: int
    fps: float

    def __post_init__(self):
        if min(self.byte_depth, self.height, self.width, self.channels) <= 0:
            raise InvalidInputError("stream dimensions must be positive")
        if self.fps < 0:
            raise InvalidInputError("fps must be >= 0")


def _round_half_away(y):
    """Round half away from zero (deterministic, symmetric)."""
    return np.copysign(np.floor(np.abs(y) + 0.5), y)


def _raw_code(d, p: CodecParams):
    """The real-valued code before rounding/clamping."""
    return np.log(p.a * (np.asarray(d, dtype=np.float64) - 1.0) + 0.01) / p.a + p.c


def encode_depth(d: float, p: CodecParams = CodecParams()) -> int:
    """Encode one metric depth to a uint8 code.

    Depths below d_min clamp to code 0; depths above d_max saturate to 255
    (or wrap modulo 256 in ``overflow_mode='wrap'``).
    """
    if not np.isfinite(d) or d <= 0:
        raise InvalidInputError(f"depth must be finite and > 0, got {d}")
    if d < p.d_min:
        return 0
    y = _round_half_away(_raw_code(d, p))
    if d > p.d_max and p.overflow_mode == "wrap":
        return int(y) % 256
    return int(min(max(y, 0.0), 255.0))


def decode_depth(code: int, p: CodecParams = CodecParams()) -> float:
    """Invert the logarithmic encoding; monotone increasing in code."""
    if not (0 <= code <= 255):
        raise InvalidInputError(f"code must be in [0, 255], got {code}")
    return float(1.0 + (np.exp(p.a * (code - p.c)) - 0.01) / p.a)


def encode_map(dm: DepthMap, p: CodecParams = CodecParams()) -> EncodedDepthMap:
    """Elementwise encode; sentinel (unknown) depths map to code 255 (far)."""
    d = dm.data
    y = np.where(d < p.d_min, 0.0, _round_half_away(_raw_code(np.maximum(d, p.d_min), p)))
    if p.overflow_mode == "wrap":
        over = d > p.d_max
        y = np.where(over, np.mod(y, 256.0), np.clip(y, 0, 255))
    else:
        y = np.clip(y, 0, 255)
    y = np.where(np.isfinite(d), y, 255.0)
    return EncodedDepthMap(y.astype(np.uint8), fov_h=dm.fov_h, fov_v=dm.fov_v)


def decode_map(e: EncodedDepthMap, p: CodecParams = CodecParams()) -> DepthMap:
    """Elementwise inverse of encode_map (sentinels decode as far depth)."""
    d = 1.0 + (np.exp(p.a * (e.codes.astype(np.float64) - p.c)) - 0.01) / p.a
    return DepthMap(d, fov_h=e.fov_h, fov_v=e.fov_v)


def quantization_step(d: float, p: CodecParams = CodecParams()) -> float:
    """Metric depth spanned by one code unit at depth d: dx/dy = a*(d-1) + 0.01."""
    if not (p.d_min <= d <= p.d_max):
        raise InvalidInputError(f"depth {d} outside codec range [{p.d_min}, {p.d_max}]")
    return p.a * (d - 1.0) + 0.01


def bandwidth_estimate(s: StreamSpec, binary_mb: bool = False) -> float:
    """Uncompressed stream bandwidth in MB/s.

    ``binary_mb=False`` uses 10^6 bytes per MB; ``binary_mb=True`` uses 2^20
    (the convention the reference bandwidth tables round to).
    """
    nbytes = s.byte_depth * s.height * s.width * s.channels * s.fps
    return nbytes / (2**20 if binary_mb else 10**6)
