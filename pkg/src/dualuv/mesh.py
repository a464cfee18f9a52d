"""Triangle meshes with per-corner UV atlases, surface samples and shells."""

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Vertices in meters, faces as vertex triples and one uv per face corner.

    ``uvs`` has shape ``(F, 3, 2)`` so seams are represented by giving the
    faces on either side different corner coordinates.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray = field(default=None)

    def __post_init__(self):
        v = _frozen(np.reshape(self.vertices, (-1, 3)), np.float64)
        f = _frozen(np.reshape(self.faces, (-1, 3)), np.int64)
        uv = np.zeros((len(f), 3, 2)) if self.uvs is None else np.reshape(self.uvs, (len(f), 3, 2))
        uv = _frozen(uv, np.float64)
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("faces must reference three distinct vertices")
        if not np.all(np.isfinite(uv)):
            raise ValueError("uv coordinates must be finite")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex positions must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "uvs", uv)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Same topology and atlas, new positions."""
        return TriMesh(vertices, self.faces, self.uvs)

    def face_corners(self, vertices=None):
        v = self.vertices if vertices is None else np.asarray(vertices)
        return v[self.faces]

    @cached_property
    def face_cross(self):
        tri = self.face_corners()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def face_normals(self):
        n = self.face_cross.copy()
        ln = np.linalg.norm(n, axis=1)
        ok = ln > 0
        n[ok] /= ln[ok, None]
        n[~ok] = 0.0
        return n

    @cached_property
    def _normals_and_flags(self):
        return compute_vertex_normals(self)

    @property
    def vertex_normals(self):
        return self._normals_and_flags[0]

    def bbox_diagonal(self):
        if not self.n_vertices:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def compute_vertex_normals(mesh):
    """Area-weighted vertex normals.

    Returns ``(normals, flagged)``; vertices touched only by zero-area faces
    (or by no face) get ``(0, 0, 1)`` and ``flagged=True``.
    """
    acc = np.zeros((mesh.n_vertices, 3))
    cross = mesh.face_cross  # |cross| = 2 * area, so the sum is area-weighted
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], cross)
    ln = np.linalg.norm(acc, axis=1)
    flagged = ln <= 1e-300
    normals = np.empty_like(acc)
    normals[~flagged] = acc[~flagged] / ln[~flagged, None]
    normals[flagged] = FALLBACK_NORMAL
    if flagged.any():
        warnings.warn(f"{int(flagged.sum())} vertices have no non-degenerate incident face", stacklevel=2)
    return normals, flagged


class SurfaceSample(NamedTuple):
    face_id: int
    bary: np.ndarray
    uv: np.ndarray


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """A batch of surface points: face ids, barycentrics and uvs."""

    face_ids: np.ndarray
    bary: np.ndarray
    uv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "face_ids", _frozen(np.reshape(self.face_ids, -1), np.int64))
        object.__setattr__(self, "bary", _frozen(np.reshape(self.bary, (-1, 3)), np.float64))
        object.__setattr__(self, "uv", _frozen(np.reshape(self.uv, (-1, 2)), np.float64))
        if not (len(self.face_ids) == len(self.bary) == len(self.uv)):
            raise ValueError("sample arrays must have equal length")

    def __len__(self):
        return len(self.face_ids)

    def __getitem__(self, i):
        return SurfaceSample(int(self.face_ids[i]), self.bary[i], self.uv[i])

    def subset(self, keep):
        return SurfaceSamples(self.face_ids[keep], self.bary[keep], self.uv[keep])

    def positions(self, mesh_or_vertices, faces=None):
        """Blend current vertex positions; works with posed or shell vertices."""
        if isinstance(mesh_or_vertices, TriMesh):
            verts, faces = mesh_or_vertices.vertices, mesh_or_vertices.faces
        else:
            verts = np.asarray(mesh_or_vertices)
        tri = verts[faces[self.face_ids]]
        return np.einsum("nk,nkd->nd", self.bary, tri)

    def as_array(self):
        """``(N, 6)`` table of face id, barycentrics and uv."""
        return np.column_stack([self.face_ids.astype(np.float64), self.bary, self.uv])

    @classmethod
    def from_array(cls, table):
        table = np.asarray(table, dtype=np.float64).reshape(-1, 6)
        return cls(table[:, 0].astype(np.int64), table[:, 1:4], table[:, 4:6])


def uv_unparameterize(mesh, face_ids, bary):
    """Texture coordinate of surface points: the barycentric blend of corner uvs."""
    face_ids = np.asarray(face_ids, dtype=np.int64)
    bary = np.asarray(bary, dtype=np.float64)
    scalar = face_ids.ndim == 0
    face_ids = np.atleast_1d(face_ids)
    bary = bary.reshape(-1, 3)
    if np.any(face_ids < 0) or np.any(face_ids >= mesh.n_faces):
        raise IndexError("face index out of range")
    uv = np.einsum("nk,nkd->nd", bary, mesh.uvs[face_ids])
    return uv[0] if scalar else uv


def sample_surface_uniform(mesh, count, seed):
    """Area-proportional uniform samples; deterministic for a fixed seed."""
    if count <= 0:
        raise ValueError("count must be positive")
    areas = mesh.face_areas.copy()
    degenerate = areas <= 0
    if degenerate.any():
        warnings.warn(f"excluding {int(degenerate.sum())} zero-area faces from sampling", stacklevel=2)
        areas[degenerate] = 0.0
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    face_ids = rng.choice(mesh.n_faces, size=count, p=areas / total)
    r1, r2 = rng.random((2, count))
    s = np.sqrt(r1)
    bary = np.column_stack([1.0 - s, s * (1.0 - r2), s * r2])
    return SurfaceSamples(face_ids, bary, uv_unparameterize(mesh, face_ids, bary))


@dataclass(frozen=True, eq=False)
class ShellMesh:
    base: TriMesh
    offset_vertices: np.ndarray
    delta: float

    @cached_property
    def mesh(self):
        return self.base.with_vertices(self.offset_vertices)


def default_shell_delta(mesh):
    """2% of the bounding-box diagonal."""
    return 0.02 * mesh.bbox_diagonal()


def build_shell(mesh, delta=None):
    """Offset every vertex by ``delta`` along its vertex normal."""
    if delta is None:
        delta = default_shell_delta(mesh)
    if delta < 0:
        raise ValueError("shell offset must be non-negative")
    if delta == 0:
        offset = mesh.vertices.copy()
    else:
        offset = mesh.vertices + delta * mesh.vertex_normals
    return ShellMesh(mesh, _frozen(offset, np.float64), float(delta))


# -- primitives -----------------------------------------------------------


def _sphere_uvs(unit_vertices, faces):
    """Equirectangular per-corner uvs with the seam at -z and fixed poles."""
    x, y, z = unit_vertices.T
    u = np.arctan2(x, z) / (2 * np.pi) + 0.5
    v = 0.5 + np.arcsin(np.clip(y, -1, 1)) / np.pi
    uv = np.stack([u[faces], v[faces]], axis=-1)
    pole = np.abs(y[faces]) > 1 - 1e-12
    for f in range(len(faces)):
        us = uv[f, :, 0]
        if us.max() - us.min() > 0.5:
            us[us < 0.5] += 1.0
        if pole[f].any():
            us[pole[f]] = us[~pole[f]].mean()
        uv[f, :, 0] = np.clip(us, 0.0, 1.0)
    return uv


def icosphere(subdivisions=3, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron with outward-facing counter-clockwise faces."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    unit = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    uvs = _sphere_uvs(unit, faces)
    return TriMesh(unit * radius + np.asarray(center, dtype=np.float64), faces, uvs)


def unit_cube():
    """Axis-aligned cube on [0,1]^3; each square is split along the diagonal
    through its even-parity corners so all corners see symmetric incidence."""
    verts = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
    index = {tuple(v.astype(int)): i for i, v in enumerate(verts)}
    faces = []
    for axis in range(3):
        for side in (0, 1):
            a1, a2 = [k for k in range(3) if k != axis]
            quad = []
            for s1, s2 in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = [0, 0, 0]
                p[axis], p[a1], p[a2] = side, s1, s2
                quad.append(index[tuple(p)])
            normal = np.zeros(3)
            normal[axis] = 1 if side else -1
            q = verts[quad]
            if np.dot(np.cross(q[1] - q[0], q[2] - q[0]), normal) < 0:
                quad = quad[::-1]
            even = [k for k in range(4) if sum(verts[quad[k]].astype(int)) % 2 == 0]
            k0 = even[0]
            a, b, c, d = (quad[(k0 + i) % 4] for i in range(4))
            faces += [(a, b, c), (a, c, d)]
    uv = np.tile(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), (len(faces), 1, 1))
    return TriMesh(verts, faces, uv)


def quad_plane(size=1.0, center=(0.0, 0.0, 0.0), normal_sign=1.0):
    """Square in the z=const plane, normal along ``normal_sign * z``, uv = [0,1]^2."""
    h = size / 2.0
    c = np.asarray(center, dtype=np.float64)
    verts = c + np.array([[-h, -h, 0], [h, -h, 0], [h, h, 0], [-h, h, 0]], dtype=np.float64)
    uv_corner = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    if normal_sign < 0:
        faces = faces[:, ::-1].copy()
    return TriMesh(verts, faces, uv_corner[faces])


def grid_plane(n=8, size=1.0, center=(0.0, 0.0, 0.0)):
    """``n x n`` quad grid in the z=const plane facing +z with uv = [0,1]^2."""
    c = np.asarray(center, dtype=np.float64)
    s = np.linspace(0.0, 1.0, n + 1)
    uu, vv = np.meshgrid(s, s)
    verts = np.column_stack([(uu.ravel() - 0.5) * size, (vv.ravel() - 0.5) * size, np.zeros(uu.size)]) + c
    uvv = np.column_stack([uu.ravel(), vv.ravel()])
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b, cc, d = a + 1, a + n + 2, a + n + 1
            faces += [(a, b, cc), (a, cc, d)]
    faces = np.array(faces)
    return TriMesh(verts, faces, uvv[faces])


# -- OBJ ------------------------------------------------------------------


def read_obj(path):
    """Parse ``v``/``vt``/``f`` records (1-based, negative indices allowed).

    Polygons are fan-triangulated; vertex normals in the file are ignored.
    """
    verts, tex, faces, face_uv = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag in ("v", "vt", "f") and len(parts) < {"v": 4, "vt": 3, "f": 4}[tag]:
                    raise ValueError("too few fields")
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "vt":
                    tex.append([float(x) for x in parts[1:3]])
                elif tag == "f":
                    corners = []
                    for token in parts[1:]:
                        fields = token.split("/")
                        vi = int(fields[0])
                        vi = vi - 1 if vi > 0 else len(verts) + vi
                        ti = None
                        if len(fields) > 1 and fields[1]:
                            ti = int(fields[1])
                            ti = ti - 1 if ti > 0 else len(tex) + ti
                        corners.append((vi, ti))
                    for k in range(1, len(corners) - 1):
                        tri = (corners[0], corners[k], corners[k + 1])
                        faces.append([c[0] for c in tri])
                        face_uv.append([c[1] for c in tri])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed {tag!r} record") from exc
    tex = np.asarray(tex, dtype=np.float64).reshape(-1, 2)
    uvs = np.zeros((len(faces), 3, 2))
    for f, ids in enumerate(face_uv):
        for k, ti in enumerate(ids):
            if ti is not None:
                if not 0 <= ti < len(tex):
                    raise ValueError(f"{path}: texture index out of range in face {f}")
                uvs[f, k] = tex[ti]
    return TriMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3), uvs)


def write_obj(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for uv in mesh.uvs.reshape(-1, 2):
            fh.write(f"vt {float(uv[0])!r} {float(uv[1])!r}\n")
        for f, tri in enumerate(mesh.faces):
            a, b, c = tri + 1
            t = 3 * f + 1
            fh.write(f"f {a}/{t} {b}/{t + 1} {c}/{t + 2}\n")
