"""Pure-Python fallback for the hot per-pixel kernels.

Same semantics as the compiled module (_kernels_cy), bit-for-bit, just slow.
Selected automatically when the extension is unavailable; see _kernels.py.
"""

import heapq
import math

import numpy as np

# Snaps span endpoints so exact integer centers stay single-pixel despite
# 1-ulp noise from the forward/backward reprojection.
SPAN_EPS = 1e-7

_KNOWN, _BAND, _INSIDE = 0, 1, 2
_INF = 1e6


def paint_spans(xd, yd, z_old, z_new, valid, src_rgb, height, width):
    """Depth-tested span painting of reprojected source pixels.

    xd/yd are 1-based real-valued span centers, z_old/z_new the source and
    transformed depths (scale S = z_old / z_new), valid the per-point keep
    flag, src_rgb the (H, W, 3) source image in row-major point order. A span
    overwrites a target pixel only when its depth is <= the depth already
    there, so the result is the nearest surface with ties won by the larger
    source index. This equals painting in far-to-near order.
    """
    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    depth = np.full((height, width), np.nan, dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    colors = src_rgb.reshape(-1, 3)
    n = xd.shape[0]
    for i in range(n):
        if not valid[i]:
            continue
        zi = z_new[i]
        s = z_old[i] / zi
        half = 0.5 * (s - 1.0)
        y0 = yd[i] - 1.0
        x0 = xd[i] - 1.0
        r0 = math.floor(y0 - half + SPAN_EPS)
        r1 = math.ceil(y0 + half - SPAN_EPS)
        c0 = math.floor(x0 - half + SPAN_EPS)
        c1 = math.ceil(x0 + half - SPAN_EPS)
        if r1 < 0 or r0 >= height or c1 < 0 or c0 >= width:
            continue
        r0, r1 = max(r0, 0), min(r1, height - 1)
        c0, c1 = max(c0, 0), min(c1, width - 1)
        color = colors[i]
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                if mask[r, c] and depth[r, c] < zi:
                    continue
                rgb[r, c] = color
                depth[r, c] = zi
                mask[r, c] = True
    return rgb, depth, mask


def _eikonal(t, flags, r1, c1, r2, c2, height, width):
    if not (0 <= r1 < height and 0 <= c1 < width):
        return _INF
    if not (0 <= r2 < height and 0 <= c2 < width):
        return _INF
    f1, f2 = flags[r1, c1], flags[r2, c2]
    if f1 == _KNOWN and f2 == _KNOWN:
        t1, t2 = t[r1, c1], t[r2, c2]
        d = 2.0 - (t1 - t2) ** 2
        if d > 0.0:
            r = math.sqrt(d)
            s = (t1 + t2 - r) / 2.0
            if s >= t1 and s >= t2:
                return s
            s += r
            if s >= t1 and s >= t2:
                return s
        return _INF
    if f1 == _KNOWN:
        return 1.0 + t[r1, c1]
    if f2 == _KNOWN:
        return 1.0 + t[r2, c2]
    return _INF


def _neighbor_table(radius):
    """Offsets within the inpaint disc plus their 1/d^2 and 1/d factors."""
    offs = []
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            d2 = dr * dr + dc * dc
            if 0 < d2 <= radius * radius:
                offs.append((dr, dc, 1.0 / d2, 1.0 / math.sqrt(d2)))
    return offs


def _fill_pixel(img, t, flags, row, col, offs, height, width):
    # Gradient of the distance map at (row, col) via one-sided differences.
    grad_r = _t_grad(t, flags, row, col, 1, 0, height, width)
    grad_c = _t_grad(t, flags, row, col, 0, 1, height, width)
    t0 = t[row, col]
    acc = np.zeros(3, dtype=np.float64)
    wsum = 0.0
    for dr, dc, inv_d2, inv_d in offs:
        rr = row + dr
        if rr < 0 or rr >= height:
            continue
        cc = col + dc
        if cc < 0 or cc >= width:
            continue
        if flags[rr, cc] != _KNOWN:
            continue
        direction = abs(dr * grad_r + dc * grad_c) * inv_d
        if direction < 1e-6:
            direction = 1e-6
        w_lev = 1.0 / (1.0 + abs(t[rr, cc] - t0))
        w = direction * inv_d2 * w_lev
        acc += w * img[rr, cc]
        wsum += w
    if wsum > 0:
        img[row, col] = np.clip(acc / wsum + 0.5, 0, 255).astype(np.uint8)


def _t_grad(t, flags, row, col, dr, dc, height, width):
    rp, cp = row + dr, col + dc
    rm, cm = row - dr, col - dc
    p_ok = 0 <= rp < height and 0 <= cp < width and flags[rp, cp] != _INSIDE
    m_ok = 0 <= rm < height and 0 <= cm < width and flags[rm, cm] != _INSIDE
    if p_ok and m_ok:
        return (t[rp, cp] - t[rm, cm]) * 0.5
    if p_ok:
        return t[rp, cp] - t[row, col]
    if m_ok:
        return t[row, col] - t[rm, cm]
    return 0.0


def telea_inpaint(rgb, known, radius):
    """Fast-marching inpainting (Telea's weighting) over mask-false pixels.

    Boundary pixels are processed in increasing distance from the known
    region; each is filled as a normalized weighted average of the known
    pixels within ``radius`` (direction * distance * level weights).
    """
    height, width = known.shape
    img = rgb.copy()
    flags = np.where(known, _KNOWN, _INSIDE).astype(np.int8)
    t = np.where(known, 0.0, _INF)
    heap = []
    known = known.astype(bool)
    inside = ~known
    # Narrow band: known pixels bordering the hole (no wrap across edges).
    band = np.zeros_like(known)
    band[1:, :] |= known[1:, :] & inside[:-1, :]
    band[:-1, :] |= known[:-1, :] & inside[1:, :]
    band[:, 1:] |= known[:, 1:] & inside[:, :-1]
    band[:, :-1] |= known[:, :-1] & inside[:, 1:]
    for r, c in zip(*np.nonzero(band)):
        flags[r, c] = _BAND
        t[r, c] = 0.0
        heapq.heappush(heap, (0.0, int(r), int(c)))
    offs = _neighbor_table(radius)
    steps = ((-1, 0), (1, 0), (0, -1), (0, 1))
    while heap:
        tval, r, c = heapq.heappop(heap)
        if flags[r, c] == _KNOWN:
            continue
        flags[r, c] = _KNOWN
        for dr, dc in steps:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < height and 0 <= cc < width):
                continue
            if flags[rr, cc] != _INSIDE:
                continue
            tn = min(
                _eikonal(t, flags, rr - 1, cc, rr, cc - 1, height, width),
                _eikonal(t, flags, rr + 1, cc, rr, cc - 1, height, width),
                _eikonal(t, flags, rr - 1, cc, rr, cc + 1, height, width),
                _eikonal(t, flags, rr + 1, cc, rr, cc + 1, height, width),
            )
            t[rr, cc] = tn
            _fill_pixel(img, t, flags, rr, cc, offs, height, width)
            flags[rr, cc] = _BAND
            heapq.heappush(heap, (tn, rr, cc))
    return img
