"""Wire formats for the frame downlink and command uplink, plus delayed channels.

Binary layout (little-endian):
  FrameMsg:   magic 'TVFR', version u16, seq u64, t0 u64 (microseconds),
              speed f32, accel f32, fov_h f32, fov_v f32, pitch f32,
              rgb length u32, depth length u32, then the two payloads.
  CommandMsg: magic 'TVCM', version u32, steer f64, station timestamp f64,
              p95 f64, p999 f64 (fixed 40 bytes).

Channels are one-producer/one-consumer FIFOs with an injected clock; the
delay source is a constant, a GEV sampler, or a recorded trace replayed
message by message.
"""

import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .delay_model import GevParams, WATCHDOG_CAP_S, sample_delays
from .errors import InvalidInputError

FRAME_MAGIC = b"TVFR"
COMMAND_MAGIC = b"TVCM"
WIRE_VERSION = 1

_FRAME_HEADER = struct.Struct("<4sHQQfffffII")
_COMMAND = struct.Struct("<4sIdddd")
COMMAND_SIZE = _COMMAND.size  # 40 bytes


class WireDecodeError(ValueError):
    """Raised on bad magic, bad version, or truncated buffers."""


@dataclass(frozen=True)
class FrameMsg:
    """One downlink sample: capture timestamp, kinematic state, image payloads."""

    seq: int
    t0_capture: float
    speed: float
    accel: float
    fov_h: float
    fov_v: float
    pitch: float
    rgb_payload: bytes = b""
    depth_payload: bytes = b""

    def __post_init__(self):
        if self.seq < 0 or self.t0_capture < 0:
            raise InvalidInputError("seq and capture time must be >= 0")


@dataclass(frozen=True)
class CommandMsg:
    """One uplink command: steer plus the three time-infos."""

    steer: float
    ts_station: float
    p95: float
    p999: float

    def __post_init__(self):
        if not (self.p95 <= self.p999 <= WATCHDOG_CAP_S + 1e-12):
            raise InvalidInputError("need p95 <= p999 <= 0.200 s")


def encode_frame(f: FrameMsg) -> bytes:
    header = _FRAME_HEADER.pack(
        FRAME_MAGIC, WIRE_VERSION, f.seq, round(f.t0_capture * 1e6),
        f.speed, f.accel, f.fov_h, f.fov_v, f.pitch,
        len(f.rgb_payload), len(f.depth_payload))
    return header + f.rgb_payload + f.depth_payload


def decode_frame(buf: bytes) -> FrameMsg:
    if len(buf) < _FRAME_HEADER.size:
        raise WireDecodeError("truncated frame header")
    magic, version, seq, t0us, speed, accel, fh, fv, pitch, nrgb, ndepth = \
        _FRAME_HEADER.unpack_from(buf)
    if magic != FRAME_MAGIC:
        raise WireDecodeError(f"bad frame magic {magic!r}")
    if version != WIRE_VERSION:
        raise WireDecodeError(f"unsupported frame version {version}")
    end = _FRAME_HEADER.size + nrgb + ndepth
    if len(buf) < end:
        raise WireDecodeError("truncated frame payloads")
    rgb = bytes(buf[_FRAME_HEADER.size:_FRAME_HEADER.size + nrgb])
    depth = bytes(buf[_FRAME_HEADER.size + nrgb:end])
    return FrameMsg(seq=seq, t0_capture=t0us / 1e6, speed=speed, accel=accel,
                    fov_h=fh, fov_v=fv, pitch=pitch,
                    rgb_payload=rgb, depth_payload=depth)


def encode_command(c: CommandMsg) -> bytes:
    return _COMMAND.pack(COMMAND_MAGIC, WIRE_VERSION, c.steer, c.ts_station,
                         c.p95, c.p999)


def decode_command(buf: bytes) -> CommandMsg:
    if len(buf) < COMMAND_SIZE:
        raise WireDecodeError("truncated command")
    magic, version, steer, ts, p95, p999 = _COMMAND.unpack_from(buf)
    if magic != COMMAND_MAGIC:
        raise WireDecodeError(f"bad command magic {magic!r}")
    if version != WIRE_VERSION:
        raise WireDecodeError(f"unsupported command version {version}")
    return CommandMsg(steer=steer, ts_station=ts, p95=p95, p999=p999)


# ---------------------------------------------------------------------------
# delay sources

class ConstantDelay:
    def __init__(self, delay: float):
        if delay < 0:
            raise InvalidInputError("delay must be >= 0")
        self.delay = delay

    def __call__(self) -> float:
        return self.delay


class GevDelay:
    """Draws each message's delay from a GEV law (seeded, deterministic)."""

    def __init__(self, params: GevParams, seed: int = 0):
        self.params = params
        self._rng = np.random.default_rng(seed)

    def __call__(self) -> float:
        return float(sample_delays(self.params, 1, self._rng)[0])


class TraceDelay:
    """Replays recorded delays message by message (cycling at the end)."""

    def __init__(self, rows):
        delays = [d for _, d in rows] if rows and isinstance(rows[0], (tuple, list)) \
            else list(rows)
        if not delays:
            raise InvalidInputError("empty delay trace")
        if any(d < 0 for d in delays):
            raise InvalidInputError("trace delays must be >= 0")
        self.delays = delays
        self._i = 0

    def __call__(self) -> float:
        d = self.delays[self._i % len(self.delays)]
        self._i += 1
        return d


class DelayedChannel:
    """One-way delayed FIFO. Sampled delays never reorder messages."""

    def __init__(self, delay_source):
        self._delay = delay_source
        self._queue = deque()
        self._last_release = -float("inf")

    def send(self, msg, now: float):
        release = now + self._delay()
        # FIFO: a fast sample cannot overtake an earlier slow one
        release = max(release, self._last_release)
        self._last_release = release
        self._queue.append((release, now, msg))

    def poll(self, now: float):
        """All messages whose release time has passed, with their actual delays."""
        out = []
        while self._queue and self._queue[0][0] <= now:
            release, sent, msg = self._queue.popleft()
            out.append((msg, release - sent))
        return out

    def __len__(self):
        return len(self._queue)
