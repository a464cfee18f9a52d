"""Pinhole camera (x right, y down, looking along +Z), FoV canonicalization
and framing targets."""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad

BEHIND_EPS = 1e-8
CANONICAL_FOV_DEG = 30.0
LOOKAT_LAMBDA = 0.75


@dataclass(frozen=True, eq=False)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("image size must be at least 1x1")
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(R) - 1.0) > 1e-6 or np.abs(R @ R.T - np.eye(3)).max() > 1e-6:
            raise ValueError("world-to-camera rotation must be orthonormal with det +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for k in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, k, float(getattr(self, k)))

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    @property
    def view_direction(self):
        """World-space optical axis (unit)."""
        return self.R[2].copy()

    def to_camera(self, points):
        return ad.einsum("ab,nb->na", self.R, points) + self.t

    def project(self, points):
        """World points ``(N, 3)`` to ``(pixels, depth, behind)``.

        ``pixels`` and ``depth`` are duals when ``points`` is. Pixels of
        points flagged behind the camera are not meaningful.
        """
        pc = self.to_camera(points)
        z = pc[:, 2]
        behind = ad.value(z) <= BEHIND_EPS
        zs = ad.where(behind, 1.0, z)
        u = self.fx * pc[:, 0] / zs + self.cx
        v = self.fy * pc[:, 1] / zs + self.cy
        return ad.stack([u, v], axis=-1), z, behind

    def unproject(self, pixels, depth):
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        depth = np.asarray(depth, dtype=np.float64).reshape(-1)
        pc = np.column_stack([
            (pixels[:, 0] - self.cx) / self.fx * depth,
            (pixels[:, 1] - self.cy) / self.fy * depth,
            depth,
        ])
        return (pc - self.t) @ self.R

    def with_pose(self, R, t):
        return replace(self, R=R, t=t)

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "R": [float(x) for x in self.R.ravel()], "t": [float(x) for x in self.t],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"],
                       np.asarray(d.get("R", np.eye(3).ravel()), dtype=np.float64).reshape(3, 3),
                       np.asarray(d.get("t", [0.0, 0.0, 0.0]), dtype=np.float64))
        except KeyError as exc:
            raise ValueError(f"camera is missing field {exc.args[0]!r}") from None


def load_camera(path):
    with open(path, "r", encoding="utf-8") as fh:
        return PinholeCamera.from_dict(json.load(fh))


def save_camera(cam, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cam.to_dict(), fh, indent=1, sort_keys=True)


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera ``(R, t)`` placing the camera at ``eye`` facing ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - eye
    f /= np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(r) < 1e-12:
        raise ValueError("up vector is parallel to the viewing direction")
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    return R, -R @ eye


def focal_for_fov(width, fov_deg):
    return (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)


def fov_correct(cam, translation_z, target_fov_deg=CANONICAL_FOV_DEG):
    """Re-express a camera under a horizontal FoV, keeping the root's projection.

    Returns ``(cam', t_z', s)`` with ``f_x' = (W/2)/tan(fov/2)``,
    ``s = f_x'/f_x``, ``f_y' = s f_y`` and ``t_z' = s t_z``. The principal
    point is kept.
    """
    if not 0.0 < target_fov_deg < 180.0:
        raise ValueError("target FoV must lie in (0, 180) degrees")
    if not translation_z > 0:
        raise ValueError("root depth translation must be positive")
    fx_new = focal_for_fov(cam.width, target_fov_deg)
    s = fx_new / cam.fx
    return replace(cam, fx=fx_new, fy=s * cam.fy), s * translation_z, s


def fov_drift(cam, translation_z, target_fov_deg, offsets):
    """Pixel drift caused by canonicalization for root-relative camera offsets.

    ``offsets`` are ``(N, 3)`` camera-space positions relative to the root;
    before correction they sit at depth ``t_z + dz``, afterwards at
    ``s t_z + dz``. Returns per-point pixel displacement.
    """
    new, tz_new, _ = fov_correct(cam, translation_z, target_fov_deg)
    off = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
    before = np.column_stack([cam.fx * off[:, 0], cam.fy * off[:, 1]]) / (translation_z + off[:, 2:3])
    after = np.column_stack([new.fx * off[:, 0], new.fy * off[:, 1]]) / (tz_new + off[:, 2:3])
    return np.linalg.norm(after - before, axis=1)


def compute_lookat(vertices, joints, pelvis_index, head_index, vertical_axis=1,
                   lam=LOOKAT_LAMBDA, allow_custom_lambda=False):
    """Framing target: horizontal midpoint of pelvis and head, vertical at
    ``v_min + lam (v_max - v_min)`` over the mesh vertices."""
    if lam != LOOKAT_LAMBDA and not allow_custom_lambda:
        raise ValueError("lam is fixed at 0.75; pass allow_custom_lambda=True to change it")
    vertices = np.asarray(vertices, dtype=np.float64)
    joints = np.asarray(joints, dtype=np.float64)
    if not len(vertices):
        raise ValueError("mesh has no vertices")
    target = 0.5 * (joints[pelvis_index] + joints[head_index])
    vmin = vertices[:, vertical_axis].min()
    vmax = vertices[:, vertical_axis].max()
    target[vertical_axis] = vmin + lam * (vmax - vmin)
    return target
