# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: triangle scan conversion, texel accumulation,
gaussian compositing and the exact Euclidean distance transform.

Every routine here has a line-for-line numpy twin in ``_kernels_py``; the
two are selected by ``dualuv.kernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, exp

cnp.import_array()

cdef double INF = float("inf")
cdef double EDT_BIG = 1e20


cdef inline double edge(double ax, double ay, double bx, double by,
                        double px, double py) nogil:
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


cdef inline bint top_left(double ax, double ay, double bx, double by) nogil:
    # positive-area orientation (clockwise on a y-down screen)
    return (ay == by and bx > ax) or (by < ay)


def raster_triangles(const double[:, :, ::1] xy, const double[:, ::1] z,
                     int width, int height, int cull, bint last_wins):
    """Scan-convert triangles given in pixel coordinates.

    Returns ``(depth, face, bary, writes)``; ``bary`` is perspective-correct
    w.r.t. the per-vertex depths in ``z``.
    """
    cdef Py_ssize_t nf = xy.shape[0]
    depth_a = np.full((height, width), np.inf)
    face_a = np.full((height, width), -1, dtype=np.int64)
    bary_a = np.zeros((height, width, 3))
    writes_a = np.zeros((height, width), dtype=np.int32)
    cdef double[:, ::1] depth = depth_a
    cdef long long[:, ::1] face = face_a
    cdef double[:, :, ::1] bary = bary_a
    cdef int[:, ::1] writes = writes_a

    cdef Py_ssize_t f
    cdef int i, j, x0i, x1i, y0i, y1i
    cdef double ax, ay, bx, by, cx, cy, za, zb, zc, area, px, py
    cdef double w0, w1, w2, b0, b1, b2, s, d, tmp, fx0, fx1, fy0, fy1
    cdef bint tl0, tl1, tl2, swapped

    with nogil:
        for f in range(nf):
            ax = xy[f, 0, 0]; ay = xy[f, 0, 1]
            bx = xy[f, 1, 0]; by = xy[f, 1, 1]
            cx = xy[f, 2, 0]; cy = xy[f, 2, 1]
            za = z[f, 0]; zb = z[f, 1]; zc = z[f, 2]
            area = edge(ax, ay, bx, by, cx, cy)
            if area == 0.0:
                continue
            if cull == 1 and area > 0.0:
                continue
            swapped = False
            if area < 0.0:
                tmp = bx; bx = cx; cx = tmp
                tmp = by; by = cy; cy = tmp
                tmp = zb; zb = zc; zc = tmp
                area = -area
                swapped = True
            # clamp in floating point before the integer cast
            fx0 = floor(min(ax, min(bx, cx)) - 0.5)
            fx1 = ceil(max(ax, max(bx, cx)) - 0.5)
            fy0 = floor(min(ay, min(by, cy)) - 0.5)
            fy1 = ceil(max(ay, max(by, cy)) - 0.5)
            if fx1 < 0.0 or fy1 < 0.0 or fx0 > width - 1 or fy0 > height - 1:
                continue
            x0i = 0 if fx0 < 0.0 else <int>fx0
            y0i = 0 if fy0 < 0.0 else <int>fy0
            x1i = width - 1 if fx1 > width - 1 else <int>fx1
            y1i = height - 1 if fy1 > height - 1 else <int>fy1
            tl0 = top_left(bx, by, cx, cy)
            tl1 = top_left(cx, cy, ax, ay)
            tl2 = top_left(ax, ay, bx, by)
            for i in range(y0i, y1i + 1):
                py = i + 0.5
                for j in range(x0i, x1i + 1):
                    px = j + 0.5
                    w0 = edge(bx, by, cx, cy, px, py)
                    if w0 < 0.0 or (w0 == 0.0 and not tl0):
                        continue
                    w1 = edge(cx, cy, ax, ay, px, py)
                    if w1 < 0.0 or (w1 == 0.0 and not tl1):
                        continue
                    w2 = edge(ax, ay, bx, by, px, py)
                    if w2 < 0.0 or (w2 == 0.0 and not tl2):
                        continue
                    b0 = (w0 / area) / za
                    b1 = (w1 / area) / zb
                    b2 = (w2 / area) / zc
                    s = b0 + b1 + b2
                    d = 1.0 / s
                    writes[i, j] += 1
                    if d < depth[i, j] or (last_wins and d == depth[i, j]):
                        depth[i, j] = d
                        face[i, j] = f
                        bary[i, j, 0] = b0 / s
                        if swapped:
                            bary[i, j, 1] = b2 / s
                            bary[i, j, 2] = b1 / s
                        else:
                            bary[i, j, 1] = b1 / s
                            bary[i, j, 2] = b2 / s
    return depth_a, face_a, bary_a, writes_a


def accumulate_texels(const long long[::1] rows, const long long[::1] cols,
                      const double[::1] weights, const double[:, ::1] features,
                      int height, int width):
    """Weighted scatter-add in ascending contribution order."""
    cdef Py_ssize_t n = rows.shape[0], c = features.shape[1], k, ch
    acc_a = np.zeros((height, width, c))
    wsum_a = np.zeros((height, width))
    cdef double[:, :, ::1] acc = acc_a
    cdef double[:, ::1] wsum = wsum_a
    cdef double w
    cdef long long r, q
    with nogil:
        for k in range(n):
            w = weights[k]
            if w == 0.0:
                continue
            r = rows[k]
            q = cols[k]
            for ch in range(c):
                acc[r, q, ch] = acc[r, q, ch] + w * features[k, ch]
            wsum[r, q] = wsum[r, q] + w
    return acc_a, wsum_a


def composite_splats(const double[:, ::1] mean2d, const double[:, ::1] conic,
                     const double[:, ::1] colors, const double[::1] opacity,
                     const long long[:, ::1] bbox, int width, int height):
    """Front-to-back compositing of pre-sorted 2D gaussians.

    ``conic`` holds the inverse 2D covariance as (a, b, c); ``bbox`` holds
    inclusive pixel bounds (x0, x1, y0, y1). Returns ``(rgb, transmittance)``.
    """
    cdef Py_ssize_t n = mean2d.shape[0], g
    rgb_a = np.zeros((height, width, 3))
    trans_a = np.ones((height, width))
    cdef double[:, :, ::1] rgb = rgb_a
    cdef double[:, ::1] trans = trans_a
    cdef int i, j
    cdef double dx, dy, m2, a, t
    with nogil:
        for g in range(n):
            for i in range(bbox[g, 2], bbox[g, 3] + 1):
                dy = (i + 0.5) - mean2d[g, 1]
                for j in range(bbox[g, 0], bbox[g, 1] + 1):
                    dx = (j + 0.5) - mean2d[g, 0]
                    m2 = conic[g, 0] * dx * dx + 2.0 * conic[g, 1] * dx * dy + conic[g, 2] * dy * dy
                    if m2 > 9.0:
                        continue
                    a = opacity[g] * exp(-0.5 * m2)
                    t = trans[i, j]
                    rgb[i, j, 0] = rgb[i, j, 0] + colors[g, 0] * a * t
                    rgb[i, j, 1] = rgb[i, j, 1] + colors[g, 1] * a * t
                    rgb[i, j, 2] = rgb[i, j, 2] + colors[g, 2] * a * t
                    trans[i, j] = t * (1.0 - a)
    return rgb_a, trans_a


cdef void _edt_1d(double* f, Py_ssize_t n, double* d, Py_ssize_t* v, double* zz) noexcept nogil:
    # lower envelope of parabolas rooted at (q, f[q])
    cdef Py_ssize_t k = 0, q
    cdef double s
    v[0] = 0
    zz[0] = -INF
    zz[1] = INF
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= zz[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        zz[k] = s
        zz[k + 1] = INF
    k = 0
    for q in range(n):
        while zz[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def edt_squared(const unsigned char[:, ::1] mask):
    """Exact squared Euclidean distance to the nearest nonzero pixel."""
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1], i, j, n
    n = h if h > w else w
    out_a = np.empty((h, w))
    cdef double[:, ::1] out = out_a
    f_a = np.empty(n)
    d_a = np.empty(n)
    z_a = np.empty(n + 1)
    v_a = np.empty(n, dtype=np.intp)
    cdef double[::1] fb = f_a
    cdef double[::1] db = d_a
    cdef double[::1] zb = z_a
    cdef Py_ssize_t[::1] vb = v_a
    with nogil:
        for j in range(w):
            for i in range(h):
                fb[i] = 0.0 if mask[i, j] else EDT_BIG
            _edt_1d(&fb[0], h, &db[0], &vb[0], &zb[0])
            for i in range(h):
                out[i, j] = db[i]
        for i in range(h):
            for j in range(w):
                fb[j] = out[i, j]
            _edt_1d(&fb[0], w, &db[0], &vb[0], &zb[0])
            for j in range(w):
                out[i, j] = db[j]
    return out_a
