"""Independent reference computations the implementation is checked against.

Everything here is deliberately naive (per-element loops or direct formulas)
and shares no code with the package beyond plain data containers.
"""

import math

import numpy as np


def ray_triangle_t(origin, direction, tri, eps=1e-12):
    """Moller-Trumbore: ray parameters of hits against ``(F, 3, 3)`` triangles
    (``inf`` where missed)."""
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(direction, e2)
    det = np.einsum("fd,fd->f", e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - v0
    u = np.einsum("fd,fd->f", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("fd,fd->f", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return np.where(hit, t, np.inf)


def camera_center(cam):
    return -cam.R.T @ cam.t


def raycast_visible(points, face_ids, mesh, cam, tol=1e-9):
    """A surface point is visible when it projects into the image in front of
    the camera and the segment from the camera center to it crosses no other
    triangle."""
    c = camera_center(cam)
    tri = mesh.vertices[mesh.faces]
    out = np.zeros(len(points), dtype=bool)
    for k, (p, f) in enumerate(zip(points, face_ids)):
        pc = cam.R @ p + cam.t
        if pc[2] <= 1e-8:
            continue
        x = cam.fx * pc[0] / pc[2] + cam.cx
        y = cam.fy * pc[1] / pc[2] + cam.cy
        if not (0 <= x < cam.width and 0 <= y < cam.height):
            continue
        t = ray_triangle_t(c, p - c, tri)
        t[f] = np.inf
        out[k] = not np.any(t < 1.0 - tol)
    return out


def pixel_ray_depth(cam, px, py, tri_cam):
    """Camera depth where the ray through pixel position ``(px, py)`` meets a
    camera-space triangle's plane, or ``None`` when the ray misses it."""
    d = np.array([(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0])
    t = ray_triangle_t(np.zeros(3), d, tri_cam[None])[0]
    return None if not np.isfinite(t) else t


def brute_edt(mask):
    """O(N^2) Euclidean distance to the nearest True pixel."""
    mask = np.asarray(mask, dtype=bool)
    fg = np.argwhere(mask)
    h, w = mask.shape
    out = np.full((h, w), np.inf)
    if not len(fg):
        return out
    for i in range(h):
        for j in range(w):
            out[i, j] = math.sqrt(float(((fg - (i, j)) ** 2).sum(axis=1).min()))
    return out


def quat_matrix(q):
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def brute_composite(means, quats, scales, colors, opacities, cam, background=(0.0, 0.0, 0.0),
                    floor=0.3, near=0.01):
    """Per-pixel exact compositing over a global depth sort.

    Each gaussian is projected with the EWA Jacobian, gets ``floor`` px^2 on
    the covariance diagonal and contributes where the pixel center lies both
    inside its 3-sigma axis box and inside the 3-sigma ellipse.
    """
    h, w = cam.height, cam.width
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    splats = []
    for mu, q, s, c, o in zip(means, quats, scales, colors, opacities):
        pc = cam.R @ mu + cam.t
        x, y, z = pc
        if z <= near:
            continue
        J = np.array([[cam.fx / z, 0.0, -cam.fx * x / z**2], [0.0, cam.fy / z, -cam.fy * y / z**2]])
        Rq = quat_matrix(q)
        sigma = Rq @ np.diag(np.asarray(s) ** 2) @ Rq.T
        cov = J @ cam.R @ sigma @ cam.R.T @ J.T + floor * np.eye(2)
        splats.append((z, np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy]), cov, c, o))
    splats.sort(key=lambda g: g[0])
    bg = np.asarray(background, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            p = np.array([j + 0.5, i + 0.5])
            T = 1.0
            acc = np.zeros(3)
            for _, m, cov, c, o in splats:
                d = p - m
                if abs(d[0]) > 3 * math.sqrt(cov[0, 0]) or abs(d[1]) > 3 * math.sqrt(cov[1, 1]):
                    continue
                m2 = d @ np.linalg.solve(cov, d)
                if m2 > 9.0:
                    continue
                a = o * math.exp(-0.5 * m2)
                acc += np.asarray(c) * a * T
                T *= 1.0 - a
            rgb[i, j] = acc + T * bg
            alpha[i, j] = 1.0 - T
    return rgb, alpha


def central_fd(fn, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def bilinear_fixed_cell(F, pix, pix_ref):
    """Bilinear interpolation whose cell is chosen at ``pix_ref``; smooth in
    ``pix`` so finite differences never straddle a cell boundary."""
    h, w = F.shape
    j0 = np.floor(pix_ref[:, 0] - 0.5).astype(int)
    i0 = np.floor(pix_ref[:, 1] - 0.5).astype(int)
    fx = pix[:, 0] - 0.5 - j0
    fy = pix[:, 1] - 0.5 - i0
    ja, jb = np.clip(j0, 0, w - 1), np.clip(j0 + 1, 0, w - 1)
    ia, ib = np.clip(i0, 0, h - 1), np.clip(i0 + 1, 0, h - 1)
    return (F[ia, ja] * (1 - fx) + F[ia, jb] * fx) * (1 - fy) + (F[ib, ja] * (1 - fx) + F[ib, jb] * fx) * fy


def sphere_silhouette_radius(f, r, d):
    """Projected radius of the tangent cone of a sphere of radius ``r`` seen
    on-axis from distance ``d``."""
    return f * r / math.sqrt(d * d - r * r)
