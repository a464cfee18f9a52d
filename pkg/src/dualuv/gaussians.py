"""UV-space gaussian attribute maps, surface-anchored gaussian sets, face-frame
rigging and a CPU EWA splatting renderer."""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import SurfaceSamples, uv_unparameterize
from .tensorio import FormatError, read_tensors, write_tensors
from .transforms import matrix_to_quat, quat_multiply, quat_to_matrix

SCALE_MIN = 1e-6
SCALE_MAX = 0.1
OFFSET_RANGE = 0.05
COV2D_FLOOR = 0.3
NEAR_PLANE = 0.01
CUTOFF_M2 = 9.0  # 3 sigma


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _normalize(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


@dataclass(frozen=True, eq=False)
class GaussianAttributeMaps:
    """Activated per-texel attributes on an ``(H, W)`` uv grid.

    ``coverage`` marks texels that carry data; all texels by default.
    """

    color: np.ndarray
    opacity: np.ndarray
    offset: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    coverage: np.ndarray = None

    def __post_init__(self):
        h, w = np.shape(self.color)[:2]
        shapes = {"color": 3, "opacity": 1, "offset": 3, "rotation": 4, "scale": 3}
        for name, c in shapes.items():
            a = np.asarray(getattr(self, name), dtype=np.float64).reshape(h, w, c)
            object.__setattr__(self, name, a)
        cov = np.ones((h, w), dtype=bool) if self.coverage is None else np.asarray(self.coverage, dtype=bool)
        object.__setattr__(self, "coverage", cov)
        if np.any(self.scale[cov] <= 0):
            raise ValueError("scales must be positive")
        if np.any((self.opacity[cov] < 0) | (self.opacity[cov] > 1)):
            raise ValueError("opacity must lie in [0, 1]")
        norms = np.linalg.norm(self.rotation[cov], axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("rotation quaternions must be unit length")

    @property
    def shape(self):
        return self.color.shape[:2]

    @classmethod
    def from_raw(cls, color, opacity, offset, rotation, scale, coverage=None):
        """Apply decoder-style activations to unconstrained maps."""
        return cls(
            color=_sigmoid(np.asarray(color, dtype=np.float64)),
            opacity=_sigmoid(np.asarray(opacity, dtype=np.float64)),
            offset=np.tanh(np.asarray(offset, dtype=np.float64)) * OFFSET_RANGE,
            rotation=_normalize(np.asarray(rotation, dtype=np.float64)),
            scale=np.clip(np.exp(np.asarray(scale, dtype=np.float64)), SCALE_MIN, SCALE_MAX),
            coverage=coverage,
        )

    def stacked(self):
        """All channels as ``(H, W, 14)`` in color, opacity, offset, rotation, scale order."""
        return np.concatenate([self.color, self.opacity, self.offset, self.rotation, self.scale], axis=2)


@dataclass(frozen=True, eq=False)
class GaussianSet:
    """Gaussians anchored to surface points (face id + barycentrics).

    Rotations are unit quaternions (w, x, y, z); covariance is
    ``R diag(s^2) R^T``.
    """

    means: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray
    face_ids: np.ndarray
    bary: np.ndarray

    def __post_init__(self):
        n = len(np.reshape(self.means, (-1, 3)))
        for name, shape, dtype in (
            ("means", (n, 3), np.float64), ("rotations", (n, 4), np.float64), ("scales", (n, 3), np.float64),
            ("colors", (n, 3), np.float64), ("opacities", (n,), np.float64),
            ("face_ids", (n,), np.int64), ("bary", (n, 3), np.float64),
        ):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype).reshape(shape))
        if not np.all(np.isfinite(self.means)):
            raise ValueError("gaussian means must be finite")

    def __len__(self):
        return len(self.means)

    @classmethod
    def empty(cls):
        z = np.zeros((0, 3))
        return cls(z, np.zeros((0, 4)), z, z, np.zeros(0), np.zeros(0, dtype=np.int64), z)

    def subset(self, keep):
        return GaussianSet(self.means[keep], self.rotations[keep], self.scales[keep], self.colors[keep],
                           self.opacities[keep], self.face_ids[keep], self.bary[keep])

    def covariances(self):
        R = quat_to_matrix(self.rotations) if len(self) else np.zeros((0, 3, 3))
        return np.einsum("nab,nb,ncb->nac", R, self.scales**2, R)

    def anchors(self):
        return np.column_stack([self.face_ids.astype(np.float64), self.bary])


def _covered_bilinear(values, coverage, uv):
    """Bilinear lookup in texel space restricted to covered taps.

    Returns ``(result, ok)``. Weights are renormalised over covered taps; a
    sample with no covered tap falls back to the nearest covered texel
    within one texel, else ``ok`` is False.
    """
    h, w = coverage.shape
    gx = uv[:, 0] * w - 0.5
    gy = (1.0 - uv[:, 1]) * h - 0.5
    j0 = np.floor(gx).astype(np.int64)
    i0 = np.floor(gy).astype(np.int64)
    fx = gx - j0
    fy = gy - i0
    acc = np.zeros((len(uv), values.shape[2]))
    wsum = np.zeros(len(uv))
    for di, dj, wt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)), (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        i = np.clip(i0 + di, 0, h - 1)
        j = np.clip(j0 + dj, 0, w - 1)
        wt = wt * coverage[i, j]
        acc += wt[:, None] * values[i, j]
        wsum += wt
    ok = wsum > 0
    acc[ok] /= wsum[ok, None]
    # no covered tap: nearest covered texel center within one texel
    for k in np.nonzero(~ok)[0]:
        ci = int(np.clip(np.floor(gy[k] + 0.5), 0, h - 1))
        cj = int(np.clip(np.floor(gx[k] + 0.5), 0, w - 1))
        best, best_d = None, 1.0 + 1e-12
        for i in range(max(ci - 1, 0), min(ci + 2, h)):
            for j in range(max(cj - 1, 0), min(cj + 2, w)):
                if coverage[i, j]:
                    d = np.hypot(i - gy[k], j - gx[k])
                    if d <= best_d:
                        best, best_d = (i, j), d
        if best is not None:
            acc[k] = values[best]
            ok[k] = True
    return acc, ok


def maps_to_gaussians(maps, mesh, samples):
    """One gaussian per surface sample, attributes read at the sample's uv.

    Samples without a covered texel within one texel are dropped.
    """
    if not maps.coverage.any():
        warnings.warn("attribute maps have empty coverage; no gaussians created", stacklevel=2)
        return GaussianSet.empty()
    vals, ok = _covered_bilinear(maps.stacked(), maps.coverage, samples.uv)
    if not ok.all():
        warnings.warn(f"dropping {int((~ok).sum())} samples without covered texels", stacklevel=2)
    vals = vals[ok]
    kept = samples.subset(ok)
    anchor = kept.positions(mesh)
    return GaussianSet(
        means=anchor + vals[:, 4:7],
        rotations=_normalize(vals[:, 7:11]),
        scales=vals[:, 11:14],
        colors=vals[:, 0:3],
        opacities=vals[:, 3],
        face_ids=kept.face_ids,
        bary=kept.bary,
    )


def face_frames(vertices, faces):
    """Orthonormal frames ``[e1, e2, n]`` (as columns) per face, plus a
    degeneracy flag. ``e1`` follows the first edge, ``n`` the face normal."""
    tri = np.asarray(vertices, dtype=np.float64)[faces]
    a = tri[:, 1] - tri[:, 0]
    b = tri[:, 2] - tri[:, 0]
    la = np.linalg.norm(a, axis=1)
    n = np.cross(a, b)
    ln = np.linalg.norm(n, axis=1)
    bad = (la <= 1e-12) | (ln <= 1e-12 * np.maximum(la * np.linalg.norm(b, axis=1), 1e-300))
    e1 = a / np.where(bad, 1.0, la)[:, None]
    n = n / np.where(bad, 1.0, ln)[:, None]
    e2 = np.cross(n, e1)
    F = np.stack([e1, e2, n], axis=2)
    F[bad] = np.eye(3)
    return F, bad


def rig_to_pose(gset, canonical_mesh, posed_mesh):
    """Carry gaussians from the canonical to the posed mesh.

    Each anchor face contributes the rotation taking its canonical frame to
    its posed frame; the offset from the anchor point and the orientation are
    rotated by it, scales are kept. Degenerate frames fall back to pure
    translation.
    """
    if canonical_mesh.n_faces != posed_mesh.n_faces or not np.array_equal(canonical_mesh.faces, posed_mesh.faces):
        raise ValueError("meshes must share topology")
    if not len(gset):
        return gset
    faces = canonical_mesh.faces[gset.face_ids]
    Fc, bad_c = face_frames(canonical_mesh.vertices, faces)
    Fp, bad_p = face_frames(posed_mesh.vertices, faces)
    bad = bad_c | bad_p
    if bad.any():
        warnings.warn(f"{int(bad.sum())} gaussians sit on degenerate faces; translating only", stacklevel=2)
    R = np.einsum("nab,ncb->nac", Fp, Fc)
    R[bad] = np.eye(3)
    pc = np.einsum("nk,nkd->nd", gset.bary, canonical_mesh.vertices[faces])
    pp = np.einsum("nk,nkd->nd", gset.bary, posed_mesh.vertices[faces])
    means = pp + np.einsum("nab,nb->na", R, gset.means - pc)
    rots = _normalize(quat_multiply(matrix_to_quat(R), gset.rotations))
    # untouched faces keep their gaussians bit-for-bit
    same = np.all(canonical_mesh.vertices[faces] == posed_mesh.vertices[faces], axis=(1, 2))
    means[same] = gset.means[same]
    rots[same] = gset.rotations[same]
    return GaussianSet(means, rots, gset.scales, gset.colors, gset.opacities, gset.face_ids, gset.bary)


@dataclass(frozen=True, eq=False)
class ProjectedSplats:
    """Screen-space footprints in front-to-back order."""

    order: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    bbox: np.ndarray


def project_gaussians(gset, cam):
    """EWA projection ``J W Sigma W^T J^T`` plus the 0.3 px^2 floor.

    Gaussians closer than the near plane are dropped; the rest are sorted
    by camera depth (stable, so ties keep set order).
    """
    if not len(gset):
        z = np.zeros((0, 2))
        return ProjectedSplats(np.zeros(0, dtype=np.int64), z, np.zeros((0, 2, 2)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 4), dtype=np.int64))
    pc = gset.means @ cam.R.T + cam.t
    keep = np.nonzero(pc[:, 2] > NEAR_PLANE)[0]
    pc = pc[keep]
    order_local = np.argsort(pc[:, 2], kind="stable")
    keep = keep[order_local]
    pc = pc[order_local]
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    J = np.zeros((len(keep), 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = cam.fy / z
    J[:, 1, 2] = -cam.fy * y / (z * z)
    T = J @ cam.R
    sigma = gset.subset(keep).covariances()
    cov = T @ sigma @ np.swapaxes(T, 1, 2)
    cov[:, 0, 0] += COV2D_FLOOR
    cov[:, 1, 1] += COV2D_FLOOR
    det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
    conic = np.column_stack([cov[:, 1, 1] / det, -cov[:, 0, 1] / det, cov[:, 0, 0] / det])
    mean2d = np.column_stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])
    rx = 3.0 * np.sqrt(cov[:, 0, 0])
    ry = 3.0 * np.sqrt(cov[:, 1, 1])
    # pixel j is inside the 3-sigma box when its center j + 0.5 is
    lo_x = np.ceil(mean2d[:, 0] - rx - 0.5)
    hi_x = np.floor(mean2d[:, 0] + rx - 0.5)
    lo_y = np.ceil(mean2d[:, 1] - ry - 0.5)
    hi_y = np.floor(mean2d[:, 1] + ry - 0.5)
    bbox = np.column_stack([
        np.clip(lo_x, 0, cam.width), np.clip(hi_x, -1, cam.width - 1),
        np.clip(lo_y, 0, cam.height), np.clip(hi_y, -1, cam.height - 1),
    ]).astype(np.int64)
    return ProjectedSplats(keep, mean2d, cov, conic, z, bbox)


def splat_render(gset, cam, background=(0.0, 0.0, 0.0)):
    """Front-to-back compositing ``C = sum c a G T`` over a global depth sort.

    Returns ``(rgb, alpha)`` with the background blended in by the final
    transmittance.
    """
    proj = project_gaussians(gset, cam)
    colors = gset.colors[proj.order]
    opac = gset.opacities[proj.order]
    rgb, trans = kernels.composite_splats(proj.mean2d, proj.conic, colors, opac, proj.bbox, cam.width, cam.height)
    bg = np.broadcast_to(np.asarray(background, dtype=np.float64), (3,))
    return rgb + trans[:, :, None] * bg, 1.0 - trans


# -- file format ------------------------------------------------------------


def save_gaussians(gset, path):
    """Records: means, rotations, scales, colors, opacities, anchors ``[face, b0, b1, b2]``."""
    write_tensors(path, [gset.means, gset.rotations, gset.scales, gset.colors, gset.opacities, gset.anchors()])


def load_gaussians(path):
    arrays = read_tensors(path)
    if len(arrays) != 6:
        raise FormatError(f"gaussian file needs 6 tensors, found {len(arrays)}")
    means, rots, scales, colors, opac, anchors = (np.asarray(a, dtype=np.float64) for a in arrays)
    n = len(means)
    expected = ((n, 3), (n, 4), (n, 3), (n, 3), (n,), (n, 4))
    for arr, shape in zip((means, rots, scales, colors, opac, anchors), expected):
        if arr.shape != shape:
            raise FormatError(f"gaussian tensor has shape {arr.shape}, expected {shape}")
    return GaussianSet(means, rots, scales, colors, opac, anchors[:, 0].astype(np.int64), anchors[:, 1:])


def anchors_as_samples(gset, mesh):
    return SurfaceSamples(gset.face_ids, gset.bary, uv_unparameterize(mesh, gset.face_ids, gset.bary))
