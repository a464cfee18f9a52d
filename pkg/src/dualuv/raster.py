"""Z-buffered triangle rasterization, point visibility, shell-only masks and
distance fields."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels

VISIBILITY_EPS_REL = 1e-3


@dataclass(frozen=True, eq=False)
class DepthBuffer:
    """Nearest camera depth per pixel (``inf`` where empty), the owning face
    id (``-1`` where empty) and perspective-correct barycentrics."""

    depth: np.ndarray
    face: np.ndarray
    bary: np.ndarray
    writes: np.ndarray
    planes: np.ndarray = None
    front: np.ndarray = None
    face_xy: np.ndarray = None

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def coverage(self):
        return self.face >= 0

    def owner_contains(self, pixels):
        """Whether the face owning each pixel covers the exact subpixel
        position (closed triangle test); ``False`` on empty pixels."""
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        rows, cols = pixel_index(pixels)
        face = self.face[rows, cols]
        out = np.zeros(len(pixels), dtype=bool)
        hit = face >= 0
        if self.face_xy is None or not hit.any():
            out[hit] = True
            return out
        tri = self.face_xy[face[hit]]
        p = pixels[hit]
        e = [
            (tri[:, (k + 1) % 3, 0] - tri[:, k, 0]) * (p[:, 1] - tri[:, k, 1])
            - (tri[:, (k + 1) % 3, 1] - tri[:, k, 1]) * (p[:, 0] - tri[:, k, 0])
            for k in range(3)
        ]
        e = np.stack(e, axis=1)
        out[hit] = np.all(e <= 0.0, axis=1) | np.all(e >= 0.0, axis=1)
        return out

    def depth_at(self, pixels, cam):
        """Depth of the surface owning each pixel, evaluated along the ray
        through the exact subpixel position rather than the pixel center.

        Falls back to the stored center depth when face planes are missing
        or the ray grazes the plane; empty pixels give ``inf``.
        """
        pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        rows, cols = pixel_index(pixels)
        out = self.depth[rows, cols].copy()
        face = self.face[rows, cols]
        hit = face >= 0
        if self.planes is None or not hit.any():
            return out
        plane = self.planes[face[hit]]
        ray = np.column_stack([
            (pixels[hit, 0] - cam.cx) / cam.fx,
            (pixels[hit, 1] - cam.cy) / cam.fy,
            np.ones(int(hit.sum())),
        ])
        denom = np.einsum("nd,nd->n", plane[:, :3], ray)
        ok = np.abs(denom) > 1e-12
        z = out[hit]
        z[ok] = -plane[ok, 3] / denom[ok]
        out[hit] = z
        return out


def face_planes(mesh, cam, vertices=None):
    """Camera-space plane ``(n, d)`` with ``n . X + d = 0`` for every face."""
    verts = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    tri = cam.to_camera(verts)[mesh.faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return np.column_stack([n, -np.einsum("fd,fd->f", n, tri[:, 0])])


def project_faces(mesh, cam, vertices=None):
    """Pixel-space triangles of faces with every corner in front of the camera.

    Returns ``(xy, z, face_ids)``; triangles crossing the ``Z = 1e-8`` plane
    are dropped rather than clipped.
    """
    verts = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    if not mesh.n_faces:
        return np.zeros((0, 3, 2)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    pix, depth, behind = cam.project(verts)
    keep = ~behind[mesh.faces].any(axis=1)
    face_ids = np.nonzero(keep)[0]
    f = mesh.faces[face_ids]
    return pix[f], depth[f], face_ids


def rasterize(mesh, cam, cull_backfaces=True, vertices=None):
    """Render the depth buffer of ``mesh`` seen by ``cam``.

    A face is front-facing when its projected signed area (y-down pixel
    frame) is negative, i.e. counter-clockwise as seen in a y-up image.
    """
    xy, z, face_ids = project_faces(mesh, cam, vertices)
    depth, face, bary, writes = kernels.raster_triangles(
        xy, z, cam.width, cam.height, cull=1 if cull_backfaces else 0
    )
    covered = face >= 0
    face[covered] = face_ids[face[covered]]
    planes = face_planes(mesh, cam, vertices) if mesh.n_faces else np.zeros((0, 4))
    front = np.zeros(mesh.n_faces, dtype=bool)
    a, b, c = xy[:, 0], xy[:, 1], xy[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    front[face_ids] = area < 0.0 if cull_backfaces else area != 0.0
    face_xy = np.full((mesh.n_faces, 3, 2), np.nan)
    face_xy[face_ids] = xy
    return DepthBuffer(depth, face, bary, writes, planes, front, face_xy)


def pixel_index(pixels):
    """Integer (row, col) of the pixel containing each continuous position."""
    pixels = np.asarray(pixels, dtype=np.float64)
    return np.floor(pixels[:, 1]).astype(np.int64), np.floor(pixels[:, 0]).astype(np.int64)


def _in_image(pixels, width, height):
    finite = np.all(np.isfinite(pixels), axis=1)
    return finite & (pixels[:, 0] >= 0) & (pixels[:, 0] < width) & (pixels[:, 1] >= 0) & (pixels[:, 1] < height)


def point_visibility(points, db, cam, eps_rel=VISIBILITY_EPS_REL, face_ids=None):
    """Binary visibility of world points against a depth buffer.

    A point is visible when it projects inside the image, lies in front of
    the camera and its depth does not exceed the buffer depth by more than
    the relative tolerance. The buffer depth is read along the point's own
    ray through the plane of the face owning its pixel.

    Without ``face_ids`` an empty pixel hides the point (only culled faces
    can project there). With ``face_ids`` the point must lie on a face that
    survived culling; it is then visible unless the pixel's owner is another
    face that covers the point's exact subpixel position and fails the
    depth test.
    Returns ``(mask, pixels)``.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pix, depth, behind = cam.project(points)
    inside = _in_image(pix, cam.width, cam.height) & ~behind
    mask = np.zeros(len(points), dtype=bool)
    if inside.any():
        buf = db.depth_at(pix[inside], cam)
        passed = depth[inside] <= buf * (1.0 + eps_rel)
        if face_ids is None or db.front is None:
            mask[inside] = np.isfinite(buf) & passed
        else:
            own = np.asarray(face_ids, dtype=np.int64)[inside]
            rows, cols = pixel_index(pix[inside])
            owner = db.face[rows, cols]
            covers = db.owner_contains(pix[inside])
            mask[inside] = db.front[own] & ((owner < 0) | (owner == own) | ~covers | passed)
    return mask, pix


def silhouette(mesh, cam, vertices=None):
    """Boolean coverage image (the coverage channel of :func:`rasterize`)."""
    return rasterize(mesh, cam, vertices=vertices).coverage


class ShellMask(NamedTuple):
    pixels: np.ndarray
    samples: np.ndarray = None
    sample_pixels: np.ndarray = None


def shell_mask(mesh, shell, cam, shell_points=None):
    """Pixels covered by the shell but not by the body, and optionally the
    gate for shell sample points at their projected pixel."""
    base = rasterize(mesh, cam).coverage
    outer = rasterize(shell.mesh, cam).coverage
    m_shell = outer & ~base
    if shell_points is None:
        return ShellMask(m_shell)
    pix, _, behind = cam.project(np.asarray(shell_points, dtype=np.float64).reshape(-1, 3))
    gate = _in_image(pix, cam.width, cam.height) & ~behind
    if gate.any():
        rows, cols = pixel_index(pix[gate])
        gate[gate] = m_shell[rows, cols]
    return ShellMask(m_shell, gate, pix)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Euclidean distance in pixels to the nearest foreground pixel."""

    distance: np.ndarray
    empty: bool = False

    @property
    def shape(self):
        return self.distance.shape


def distance_transform(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise ValueError("mask image is empty")
    if not mask.any():
        return DistanceField(np.full(mask.shape, np.inf), empty=True)
    return DistanceField(np.sqrt(kernels.edt_squared(mask)))
