"""Rotation helpers and least-squares similarity alignment."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

_SMALL_ANGLE2 = 1e-8


def _skew_terms(aa):
    x, y, z = aa[..., 0], aa[..., 1], aa[..., 2]
    return x, y, z


def rodrigues(aa):
    """Axis-angle ``(..., 3)`` to rotation matrices ``(..., 3, 3)``.

    Written in terms of ``theta**2`` with a Taylor branch near zero so it is
    smooth (and differentiable through :mod:`autodiff`) at the identity.
    """
    x, y, z = _skew_terms(aa)
    t2 = x * x + y * y + z * z
    t2v = ad.value(t2)
    small = t2v < _SMALL_ANGLE2
    safe = ad.where(small, 1.0, t2)
    theta = ad.sqrt(safe)
    a_big = ad.sin(theta) / theta
    b_big = (1.0 - ad.cos(theta)) / safe
    a_small = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    b_small = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    a = ad.where(small, a_small, a_big)
    b = ad.where(small, b_small, b_big)
    # R = I + a K + b K^2, K = [aa]_x
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    r00 = 1.0 - b * (yy + zz)
    r11 = 1.0 - b * (xx + zz)
    r22 = 1.0 - b * (xx + yy)
    r01 = b * xy - a * z
    r10 = b * xy + a * z
    r02 = b * xz + a * y
    r20 = b * xz - a * y
    r12 = b * yz - a * x
    r21 = b * yz + a * x
    rows = [
        ad.stack([r00, r01, r02], axis=-1),
        ad.stack([r10, r11, r12], axis=-1),
        ad.stack([r20, r21, r22], axis=-1),
    ]
    return ad.stack(rows, axis=-2)


def rotation_to_axis_angle(R):
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # axis from the symmetric part near 180 degrees
        M = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(M), 0.0, None))
        k = int(np.argmax(axis))
        axis = M[k] / np.sqrt(M[k, k])
        return axis / np.linalg.norm(axis) * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w / (2.0 * np.sin(angle)) * angle


def geodesic_angle(Ra, Rb):
    """Angle (radians) of the relative rotation ``Ra^T Rb``."""
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def quat_to_matrix(q):
    """Unit quaternions ``(..., 4)`` in (w, x, y, z) order to matrices."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def matrix_to_quat(R):
    """Rotation matrices ``(..., 3, 3)`` to (w, x, y, z) quaternions, w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    flat = R.reshape(-1, 3, 3)
    out = np.empty((len(flat), 4))
    for k, m in enumerate(flat):
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        q = np.asarray(q)
        if q[0] < 0:
            q = -q
        out[k] = q / np.linalg.norm(q)
    return out.reshape(R.shape[:-2] + (4,))


def quat_multiply(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        -1,
    )


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("similarity scale must be positive")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return SimilarityTransform(1.0 / self.scale, Rt, -(Rt @ self.translation) / self.scale)


def estimate_similarity(src, dst):
    """Least-squares ``s, R, t`` minimising ``sum |s R src + t - dst|^2``.

    Closed form from the SVD of the cross-covariance (Umeyama 1991).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    if len(src) < 3:
        raise ValueError("need at least 3 correspondences")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = (xs * xs).sum() / len(src)
    sv = np.linalg.svd(xs, compute_uv=False)
    if var_s <= 0 or sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise ValueError("degenerate (collinear or coincident) source points")
    cov = xd.T @ xs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(D) @ S) / var_s)
    t = mu_d - s * R @ mu_s
    return SimilarityTransform(s, R, t)
