"""Image-container boundaries for the wire payloads (opaque codecs).

RGB rides in JPEG (quality 80) by default, PNG in lossless test mode; the
8-bit encoded depth map rides in PNG by default to keep transport loss out
of the depth-codec error budget (JPEG optional for bandwidth studies).
"""

import io

import numpy as np
from PIL import Image


def rgb_to_payload(data: np.ndarray, fmt: str = "jpeg", quality: int = 80) -> bytes:
    buf = io.BytesIO()
    img = Image.fromarray(data, mode="RGB")
    if fmt == "jpeg":
        img.save(buf, format="JPEG", quality=quality)
    elif fmt == "png":
        img.save(buf, format="PNG")
    else:
        raise ValueError(f"unknown rgb container {fmt!r}")
    return buf.getvalue()


def payload_to_rgb(payload: bytes) -> np.ndarray:
    # np.array (not asarray) so the result is writable; PIL buffers are
    # read-only and the compiled warp kernels need writable-compatible input
    with Image.open(io.BytesIO(payload)) as img:
        return np.array(img.convert("RGB"))


def codes_to_payload(codes: np.ndarray, fmt: str = "png", quality: int = 85) -> bytes:
    buf = io.BytesIO()
    img = Image.fromarray(codes, mode="L")
    if fmt == "png":
        img.save(buf, format="PNG")
    elif fmt == "jpeg":
        img.save(buf, format="JPEG", quality=quality)
    else:
        raise ValueError(f"unknown depth container {fmt!r}")
    return buf.getvalue()


def payload_to_codes(payload: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(payload)) as img:
        return np.array(img.convert("L"))
