# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel kernels: depth-tested span painting and fast-marching
(Telea) inpainting. Semantics mirror _kernels_py bit-for-bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sqrt, fabs

cnp.import_array()

DEF SPAN_EPS = 1e-7
DEF INF_T = 1e6
DEF KNOWN = 0
DEF BAND = 1
DEF INSIDE = 2


def paint_spans(double[::1] xd, double[::1] yd, double[::1] z_old,
                double[::1] z_new, cnp.uint8_t[::1] valid,
                cnp.uint8_t[:, :, ::1] src_rgb, int height, int width):
    """Depth-tested span painting of reprojected source pixels.

    A span overwrites a target pixel only when its depth is <= the depth
    already there: nearest surface wins, ties won by the larger source
    index. Equal to painting in far-to-near order.
    """
    rgb_arr = np.zeros((height, width, 3), dtype=np.uint8)
    depth_arr = np.full((height, width), np.nan, dtype=np.float64)
    mask_arr = np.zeros((height, width), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] rgb = rgb_arr
    cdef double[:, ::1] depth = depth_arr
    cdef cnp.uint8_t[:, ::1] mask = mask_arr
    cdef Py_ssize_t i, n = xd.shape[0]
    cdef long r0, r1, c0, c1, r, c, src_r, src_c
    cdef double half, zi, s, x0, y0
    cdef cnp.uint8_t cr, cg, cb
    cdef long src_w = src_rgb.shape[1]
    for i in range(n):
        if not valid[i]:
            continue
        zi = z_new[i]
        s = z_old[i] / zi
        half = 0.5 * (s - 1.0)
        y0 = yd[i] - 1.0
        x0 = xd[i] - 1.0
        r0 = <long>floor(y0 - half + SPAN_EPS)
        r1 = <long>ceil(y0 + half - SPAN_EPS)
        c0 = <long>floor(x0 - half + SPAN_EPS)
        c1 = <long>ceil(x0 + half - SPAN_EPS)
        if r1 < 0 or r0 >= height or c1 < 0 or c0 >= width:
            continue
        if r0 < 0: r0 = 0
        if c0 < 0: c0 = 0
        if r1 > height - 1: r1 = height - 1
        if c1 > width - 1: c1 = width - 1
        src_r = i // src_w
        src_c = i % src_w
        cr = src_rgb[src_r, src_c, 0]
        cg = src_rgb[src_r, src_c, 1]
        cb = src_rgb[src_r, src_c, 2]
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                if mask[r, c] and depth[r, c] < zi:
                    continue
                rgb[r, c, 0] = cr
                rgb[r, c, 1] = cg
                rgb[r, c, 2] = cb
                depth[r, c] = zi
                mask[r, c] = 1
    return rgb_arr, depth_arr, mask_arr.view(bool)


cdef struct HeapItem:
    double t
    int r
    int c


cdef inline bint _less(HeapItem a, HeapItem b) nogil:
    if a.t != b.t:
        return a.t < b.t
    if a.r != b.r:
        return a.r < b.r
    return a.c < b.c


cdef inline void _heap_push(HeapItem* heap, Py_ssize_t* size, HeapItem item) nogil:
    cdef Py_ssize_t i = size[0], parent
    cdef HeapItem tmp
    heap[i] = item
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(heap[i], heap[parent]):
            tmp = heap[i]; heap[i] = heap[parent]; heap[parent] = tmp
            i = parent
        else:
            break


cdef inline HeapItem _heap_pop(HeapItem* heap, Py_ssize_t* size) nogil:
    cdef HeapItem top = heap[0]
    cdef Py_ssize_t i = 0, child
    cdef HeapItem tmp
    size[0] -= 1
    heap[0] = heap[size[0]]
    while True:
        child = 2 * i + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and _less(heap[child + 1], heap[child]):
            child += 1
        if _less(heap[child], heap[i]):
            tmp = heap[i]; heap[i] = heap[child]; heap[child] = tmp
            i = child
        else:
            break
    return top


cdef inline double _eikonal(double[:, ::1] t, cnp.int8_t[:, ::1] flags,
                            long r1, long c1, long r2, long c2,
                            long height, long width) nogil:
    cdef double t1, t2, d, r, s
    if r1 < 0 or r1 >= height or c1 < 0 or c1 >= width:
        return INF_T
    if r2 < 0 or r2 >= height or c2 < 0 or c2 >= width:
        return INF_T
    cdef cnp.int8_t f1 = flags[r1, c1], f2 = flags[r2, c2]
    if f1 == KNOWN and f2 == KNOWN:
        t1 = t[r1, c1]; t2 = t[r2, c2]
        d = 2.0 - (t1 - t2) * (t1 - t2)
        if d > 0.0:
            r = sqrt(d)
            s = (t1 + t2 - r) / 2.0
            if s >= t1 and s >= t2:
                return s
            s += r
            if s >= t1 and s >= t2:
                return s
        return INF_T
    if f1 == KNOWN:
        return 1.0 + t[r1, c1]
    if f2 == KNOWN:
        return 1.0 + t[r2, c2]
    return INF_T


cdef inline double _t_grad(double[:, ::1] t, cnp.int8_t[:, ::1] flags,
                           long row, long col, long dr, long dc,
                           long height, long width) nogil:
    cdef long rp = row + dr, cp = col + dc, rm = row - dr, cm = col - dc
    cdef bint p_ok = (0 <= rp < height) and (0 <= cp < width) and flags[rp, cp] != INSIDE
    cdef bint m_ok = (0 <= rm < height) and (0 <= cm < width) and flags[rm, cm] != INSIDE
    if p_ok and m_ok:
        return (t[rp, cp] - t[rm, cm]) * 0.5
    if p_ok:
        return t[rp, cp] - t[row, col]
    if m_ok:
        return t[row, col] - t[rm, cm]
    return 0.0


cdef inline void _fill_pixel(cnp.uint8_t[:, :, ::1] img, double[:, ::1] t,
                             cnp.int8_t[:, ::1] flags, long row, long col,
                             long n_offs, long* off_r, long* off_c,
                             double* inv_d2, double* inv_d,
                             long height, long width) nogil:
    cdef double grad_r = _t_grad(t, flags, row, col, 1, 0, height, width)
    cdef double grad_c = _t_grad(t, flags, row, col, 0, 1, height, width)
    cdef double t0 = t[row, col]
    cdef double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, wsum = 0.0
    cdef double direction, w_lev, w, v
    cdef long rr, cc, k
    for k in range(n_offs):
        rr = row + off_r[k]
        if rr < 0 or rr >= height:
            continue
        cc = col + off_c[k]
        if cc < 0 or cc >= width:
            continue
        if flags[rr, cc] != KNOWN:
            continue
        direction = fabs(off_r[k] * grad_r + off_c[k] * grad_c) * inv_d[k]
        if direction < 1e-6:
            direction = 1e-6
        w_lev = 1.0 / (1.0 + fabs(t[rr, cc] - t0))
        w = direction * inv_d2[k] * w_lev
        acc0 += w * img[rr, cc, 0]
        acc1 += w * img[rr, cc, 1]
        acc2 += w * img[rr, cc, 2]
        wsum += w
    if wsum > 0:
        v = acc0 / wsum + 0.5
        img[row, col, 0] = <cnp.uint8_t>(0.0 if v < 0 else (255.0 if v > 255 else v))
        v = acc1 / wsum + 0.5
        img[row, col, 1] = <cnp.uint8_t>(0.0 if v < 0 else (255.0 if v > 255 else v))
        v = acc2 / wsum + 0.5
        img[row, col, 2] = <cnp.uint8_t>(0.0 if v < 0 else (255.0 if v > 255 else v))


def telea_inpaint(cnp.uint8_t[:, :, ::1] rgb, cnp.uint8_t[:, ::1] known, int radius):
    """Fast-marching inpainting over mask-false pixels (Telea weighting)."""
    cdef long height = known.shape[0], width = known.shape[1]
    img_arr = np.array(rgb, dtype=np.uint8, copy=True)
    cdef cnp.uint8_t[:, :, ::1] img = img_arr
    flags_arr = np.empty((height, width), dtype=np.int8)
    t_arr = np.empty((height, width), dtype=np.float64)
    cdef cnp.int8_t[:, ::1] flags = flags_arr
    cdef double[:, ::1] t = t_arr
    cdef long r, c, rr, cc, k
    cdef bint border
    for r in range(height):
        for c in range(width):
            if known[r, c]:
                flags[r, c] = KNOWN
                t[r, c] = 0.0
            else:
                flags[r, c] = INSIDE
                t[r, c] = INF_T

    heap_arr = np.empty(max(height * width, 1),
                        dtype=[("t", np.float64), ("r", np.int32), ("c", np.int32)])
    cdef HeapItem* heap = <HeapItem*>cnp.PyArray_DATA(<cnp.ndarray>heap_arr)
    cdef Py_ssize_t heap_size = 0
    cdef HeapItem item, top

    # Offset table of the inpaint disc with precomputed 1/d^2 and 1/d.
    cdef long n_offs = 0, dr, dc, d2
    cdef long r2max = <long>radius * radius
    offr_arr = np.empty((2 * radius + 1) ** 2, dtype=np.int64)
    offc_arr = np.empty((2 * radius + 1) ** 2, dtype=np.int64)
    invd2_arr = np.empty((2 * radius + 1) ** 2, dtype=np.float64)
    invd_arr = np.empty((2 * radius + 1) ** 2, dtype=np.float64)
    cdef long* off_r = <long*>cnp.PyArray_DATA(<cnp.ndarray>offr_arr)
    cdef long* off_c = <long*>cnp.PyArray_DATA(<cnp.ndarray>offc_arr)
    cdef double* inv_d2 = <double*>cnp.PyArray_DATA(<cnp.ndarray>invd2_arr)
    cdef double* inv_d = <double*>cnp.PyArray_DATA(<cnp.ndarray>invd_arr)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            d2 = dr * dr + dc * dc
            if 0 < d2 <= r2max:
                off_r[n_offs] = dr
                off_c[n_offs] = dc
                inv_d2[n_offs] = 1.0 / d2
                inv_d[n_offs] = 1.0 / sqrt(<double>d2)
                n_offs += 1

    cdef long steps[4][2]
    steps[0][0] = -1; steps[0][1] = 0
    steps[1][0] = 1;  steps[1][1] = 0
    steps[2][0] = 0;  steps[2][1] = -1
    steps[3][0] = 0;  steps[3][1] = 1

    # Narrow band: known pixels bordering the hole.
    for r in range(height):
        for c in range(width):
            if flags[r, c] != KNOWN:
                continue
            border = False
            for k in range(4):
                rr = r + steps[k][0]
                cc = c + steps[k][1]
                if 0 <= rr < height and 0 <= cc < width and flags[rr, cc] == INSIDE:
                    border = True
                    break
            if border:
                flags[r, c] = BAND
                t[r, c] = 0.0
                item.t = 0.0; item.r = <int>r; item.c = <int>c
                _heap_push(heap, &heap_size, item)

    cdef double tn, e1, e2, e3, e4
    while heap_size > 0:
        top = _heap_pop(heap, &heap_size)
        r = top.r; c = top.c
        if flags[r, c] == KNOWN:
            continue
        flags[r, c] = KNOWN
        for k in range(4):
            rr = r + steps[k][0]
            cc = c + steps[k][1]
            if rr < 0 or rr >= height or cc < 0 or cc >= width:
                continue
            if flags[rr, cc] != INSIDE:
                continue
            e1 = _eikonal(t, flags, rr - 1, cc, rr, cc - 1, height, width)
            e2 = _eikonal(t, flags, rr + 1, cc, rr, cc - 1, height, width)
            e3 = _eikonal(t, flags, rr - 1, cc, rr, cc + 1, height, width)
            e4 = _eikonal(t, flags, rr + 1, cc, rr, cc + 1, height, width)
            tn = e1
            if e2 < tn: tn = e2
            if e3 < tn: tn = e3
            if e4 < tn: tn = e4
            t[rr, cc] = tn
            _fill_pixel(img, t, flags, rr, cc, n_offs, off_r, off_c,
                        inv_d2, inv_d, height, width)
            flags[rr, cc] = BAND
            item.t = tn; item.r = <int>rr; item.c = <int>cc
            _heap_push(heap, &heap_size, item)
    return img_arr
