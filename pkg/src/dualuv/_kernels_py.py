"""Pure numpy implementations of the compiled kernels.

Arithmetic is written in the same operation order as ``_kernels.pyx`` so the
rasterizer and accumulator agree bit-for-bit across backends; the splat
compositor may differ by an ulp through ``exp``.
"""

import math

import numpy as np
from scipy import ndimage


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by):
    return (ay == by and bx > ax) or (by < ay)


def raster_triangles(xy, z, width, height, cull, last_wins):
    depth = np.full((height, width), np.inf)
    face = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    writes = np.zeros((height, width), dtype=np.int32)
    for f in range(xy.shape[0]):
        (ax, ay), (bx, by), (cx, cy) = (tuple(p) for p in xy[f].tolist())
        za, zb, zc = z[f].tolist()
        area = _edge(ax, ay, bx, by, cx, cy)
        if area == 0.0 or (cull == 1 and area > 0.0):
            continue
        swapped = False
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
            zb, zc = zc, zb
            area = -area
            swapped = True
        x0 = max(int(math.floor(min(ax, bx, cx) - 0.5)), 0)
        x1 = min(int(math.ceil(max(ax, bx, cx) - 0.5)), width - 1)
        y0 = max(int(math.floor(min(ay, by, cy) - 0.5)), 0)
        y1 = min(int(math.ceil(max(ay, by, cy) - 0.5)), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        px = np.arange(x0, x1 + 1) + 0.5
        py = (np.arange(y0, y1 + 1) + 0.5)[:, None]
        w0 = _edge(bx, by, cx, cy, px, py)
        w1 = _edge(cx, cy, ax, ay, px, py)
        w2 = _edge(ax, ay, bx, by, px, py)
        inside = (
            ((w0 > 0.0) | ((w0 == 0.0) & _top_left(bx, by, cx, cy)))
            & ((w1 > 0.0) | ((w1 == 0.0) & _top_left(cx, cy, ax, ay)))
            & ((w2 > 0.0) | ((w2 == 0.0) & _top_left(ax, ay, bx, by)))
        )
        if not inside.any():
            continue
        ii, jj = np.nonzero(inside)
        w0, w1, w2 = w0[ii, jj], w1[ii, jj], w2[ii, jj]
        ii = ii + y0
        jj = jj + x0
        b0 = (w0 / area) / za
        b1 = (w1 / area) / zb
        b2 = (w2 / area) / zc
        s = b0 + b1 + b2
        d = 1.0 / s
        writes[ii, jj] += 1
        cur = depth[ii, jj]
        win = (d < cur) | ((d == cur) if last_wins else False)
        ii, jj, s = ii[win], jj[win], s[win]
        depth[ii, jj] = d[win]
        face[ii, jj] = f
        bary[ii, jj, 0] = b0[win] / s
        if swapped:
            b1, b2 = b2, b1
        bary[ii, jj, 1] = b1[win] / s
        bary[ii, jj, 2] = b2[win] / s
    return depth, face, bary, writes


def accumulate_texels(rows, cols, weights, features, height, width):
    acc = np.zeros((height, width, features.shape[1]))
    wsum = np.zeros((height, width))
    keep = weights != 0.0
    rows, cols, weights, features = rows[keep], cols[keep], weights[keep], features[keep]
    # ufunc.at is unbuffered and applies contributions in index order
    np.add.at(acc, (rows, cols), weights[:, None] * features)
    np.add.at(wsum, (rows, cols), weights)
    return acc, wsum


def composite_splats(mean2d, conic, colors, opacity, bbox, width, height):
    rgb = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    for g in range(mean2d.shape[0]):
        x0, x1, y0, y1 = bbox[g].tolist()
        if x1 < x0 or y1 < y0:
            continue
        dx = (np.arange(x0, x1 + 1) + 0.5) - mean2d[g, 0]
        dy = ((np.arange(y0, y1 + 1) + 0.5) - mean2d[g, 1])[:, None]
        m2 = conic[g, 0] * dx * dx + 2.0 * conic[g, 1] * dx * dy + conic[g, 2] * dy * dy
        ii, jj = np.nonzero(m2 <= 9.0)
        a = opacity[g] * np.exp(-0.5 * m2[ii, jj])
        ii = ii + y0
        jj = jj + x0
        t = trans[ii, jj]
        rgb[ii, jj, :] += colors[g][None, :] * a[:, None] * t[:, None]
        trans[ii, jj] = t * (1.0 - a)
    return rgb, trans


def edt_squared(mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    ii, jj = np.indices(mask.shape)
    # integer offsets keep the squared distance exact
    return ((ii - idx[0]) ** 2 + (jj - idx[1]) ** 2).astype(np.float64)
