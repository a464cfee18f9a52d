"""Generic articulated body with linear blend skinning.

The body stands in for a licensed parametric human model: a rest mesh, a
topologically ordered joint tree, dense skinning weights and optional
shape/expression displacement bases. :func:`lbs_pose` is written against the
array-generic helpers of :mod:`autodiff`, so the same call evaluates plain
values or carries forward-mode derivatives with respect to the pose.
"""

import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .mesh import TriMesh
from .transforms import rodrigues

REQUIRED_JOINTS = (
    "pelvis", "neck", "head",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_ear", "right_ear", "left_hip", "right_hip",
)
JOINT_GROUPS = ("body", "lhand", "rhand", "jaw")


@dataclass(frozen=True, eq=False)
class SkinnedBody:
    rest_mesh: TriMesh
    joints: np.ndarray
    parents: tuple
    joint_names: tuple
    skin_weights: np.ndarray
    shape_basis: np.ndarray = None
    expr_basis: np.ndarray = None
    groups: dict = field(default_factory=dict)
    vertex_parts: dict = field(default_factory=dict)

    def __post_init__(self):
        n_v = self.rest_mesh.n_vertices
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        n_j = len(joints)
        parents = tuple(int(p) for p in self.parents)
        names = tuple(self.joint_names)
        if len(parents) != n_j or len(names) != n_j:
            raise ValueError("joints, parents and names must have equal length")
        if len(set(names)) != n_j:
            raise ValueError("joint names must be unique")
        for j, p in enumerate(parents):
            if (j == 0) != (p < 0) or p >= j:
                raise ValueError(f"joint {names[j]!r}: parent must be a lower index (root only at 0)")
        missing = [n for n in REQUIRED_JOINTS if n not in names]
        if missing:
            raise ValueError(f"body is missing required joints: {missing}")
        w = np.asarray(self.skin_weights, dtype=np.float64).reshape(n_v, n_j)
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("skin weights must be non-negative and sum to 1 per vertex")
        bases = {}
        for key in ("shape_basis", "expr_basis"):
            b = getattr(self, key)
            b = np.zeros((n_v, 3, 0)) if b is None else np.asarray(b, dtype=np.float64)
            if b.ndim != 3 or b.shape[:2] != (n_v, 3):
                raise ValueError(f"{key} must have shape (V, 3, K)")
            bases[key] = b
        groups = {g: tuple(int(i) for i in self.groups.get(g, ())) for g in JOINT_GROUPS}
        for g, ids in groups.items():
            if any(not 0 < i < n_j for i in ids):
                raise ValueError(f"group {g!r} references an invalid joint (the root is driven globally)")
        parts = {k: np.asarray(v, dtype=np.int64) for k, v in self.vertex_parts.items()}
        for k, ids in parts.items():
            if len(ids) and (ids.min() < 0 or ids.max() >= n_v):
                raise ValueError(f"vertex part {k!r} out of range")
        for name, val in (
            ("joints", joints), ("parents", parents), ("joint_names", names), ("skin_weights", w),
            ("shape_basis", bases["shape_basis"]), ("expr_basis", bases["expr_basis"]),
            ("groups", groups), ("vertex_parts", parts),
        ):
            object.__setattr__(self, name, val)

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def n_beta(self):
        return self.shape_basis.shape[2]

    @property
    def n_psi(self):
        return self.expr_basis.shape[2]

    def joint_index(self, name):
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def group_size(self, group):
        return len(self.groups[group])

    def vertex_part_of(self):
        """Per-vertex part label (``"body"`` when in no named part)."""
        labels = np.full(self.rest_mesh.n_vertices, "body", dtype=object)
        for k, ids in self.vertex_parts.items():
            labels[ids] = k
        return labels


class PosedBody(NamedTuple):
    vertices: object
    joints: object

    def mesh(self, body):
        return body.rest_mesh.with_vertices(ad.value(self.vertices))


def _matvec(R, v):
    return ad.einsum("ab,b->a", R, v)


def _matmul(A, B):
    return ad.einsum("ab,bc->ac", A, B)


def lbs_pose(body, joint_aa=None, global_aa=None, translation=None, beta=None, psi=None, rest_vertices=None):
    """Skin the body.

    ``joint_aa`` holds one local axis-angle per joint ``(J, 3)``; the root's
    entry rotates about the pelvis. ``global_aa`` then rotates the whole body
    about the world origin and ``translation`` shifts it. Any argument may be
    an :class:`autodiff.Dual`. ``rest_vertices`` overrides the rest positions
    (used for head replacement before skinning).
    """
    n_j = body.n_joints
    if joint_aa is None:
        joint_aa = np.zeros((n_j, 3))
    if ad.value(joint_aa).shape != (n_j, 3):
        raise ValueError(f"joint_aa must have shape ({n_j}, 3)")
    rest = body.rest_mesh.vertices if rest_vertices is None else rest_vertices
    v = rest
    for coeffs, basis, label in ((beta, body.shape_basis, "shape"), (psi, body.expr_basis, "expression")):
        if coeffs is None:
            continue
        if ad.value(coeffs).shape != (basis.shape[2],):
            raise ValueError(f"{label} coefficient length {ad.value(coeffs).shape} does not match basis ({basis.shape[2]},)")
        if basis.shape[2]:
            v = v + ad.einsum("vdk,k->vd", basis, coeffs)

    R = rodrigues(joint_aa)
    J = body.joints
    g_rot = [R[0]]
    g_t = [ad.value(J[0]) * 1.0]
    for j in range(1, n_j):
        p = body.parents[j]
        g_rot.append(_matmul(g_rot[p], R[j]))
        g_t.append(_matvec(g_rot[p], J[j] - J[p]) + g_t[p])
    G_rot = ad.stack(g_rot, axis=0)
    G_t = ad.stack(g_t, axis=0)
    A_t = G_t - ad.einsum("jab,jb->ja", G_rot, J)

    W = body.skin_weights
    T_rot = ad.einsum("vj,jab->vab", W, G_rot)
    T_t = ad.einsum("vj,ja->va", W, A_t)
    posed = ad.einsum("vab,vb->va", T_rot, v) + T_t
    joints = G_t

    if global_aa is not None:
        Rg = rodrigues(global_aa)
        posed = ad.einsum("ab,vb->va", Rg, posed)
        joints = ad.einsum("ab,jb->ja", Rg, joints)
    if translation is not None:
        posed = posed + translation
        joints = joints + translation
    return PosedBody(posed, joints)


# -- procedural tube body ---------------------------------------------------

TUBE_JOINTS = (
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("spine", 0, (0.0, 0.2, 0.0)),
    ("neck", 1, (0.0, 0.5, 0.0)),
    ("head", 2, (0.0, 0.6, 0.0)),
    ("left_ear", 3, (0.08, 0.72, 0.0)),
    ("right_ear", 3, (-0.08, 0.72, 0.0)),
    ("left_shoulder", 1, (0.18, 0.45, 0.0)),
    ("left_elbow", 6, (0.45, 0.45, 0.0)),
    ("left_wrist", 7, (0.7, 0.45, 0.0)),
    ("right_shoulder", 1, (-0.18, 0.45, 0.0)),
    ("right_elbow", 9, (-0.45, 0.45, 0.0)),
    ("right_wrist", 10, (-0.7, 0.45, 0.0)),
    ("left_hip", 0, (0.1, -0.05, 0.0)),
    ("left_knee", 12, (0.1, -0.5, 0.0)),
    ("right_hip", 0, (-0.1, -0.05, 0.0)),
    ("right_knee", 14, (-0.1, -0.5, 0.0)),
)

# (owning joint, start, end, radius, vertex part)
TUBE_SEGMENTS = (
    ("pelvis", (0.0, -0.08, 0.0), (0.0, 0.2, 0.0), 0.13, "body"),
    ("spine", (0.0, 0.2, 0.0), (0.0, 0.5, 0.0), 0.14, "body"),
    ("neck", (0.0, 0.5, 0.0), (0.0, 0.6, 0.0), 0.05, "body"),
    ("head", (0.0, 0.6, 0.0), (0.0, 0.84, 0.0), 0.1, "head"),
    ("left_shoulder", (0.18, 0.45, 0.0), (0.45, 0.45, 0.0), 0.045, "body"),
    ("left_elbow", (0.45, 0.45, 0.0), (0.7, 0.45, 0.0), 0.04, "body"),
    ("left_wrist", (0.7, 0.45, 0.0), (0.85, 0.45, 0.0), 0.035, "lhand"),
    ("right_shoulder", (-0.18, 0.45, 0.0), (-0.45, 0.45, 0.0), 0.045, "body"),
    ("right_elbow", (-0.45, 0.45, 0.0), (-0.7, 0.45, 0.0), 0.04, "body"),
    ("right_wrist", (-0.7, 0.45, 0.0), (-0.85, 0.45, 0.0), 0.035, "rhand"),
    ("left_hip", (0.1, -0.05, 0.0), (0.1, -0.5, 0.0), 0.07, "body"),
    ("left_knee", (0.1, -0.5, 0.0), (0.1, -0.95, 0.0), 0.055, "body"),
    ("right_hip", (-0.1, -0.05, 0.0), (-0.1, -0.5, 0.0), 0.07, "body"),
    ("right_knee", (-0.1, -0.5, 0.0), (-0.1, -0.95, 0.0), 0.055, "body"),
)

TUBE_GROUPS = {
    "body": ("spine", "neck", "head", "left_shoulder", "left_elbow", "right_shoulder",
             "right_elbow", "left_hip", "left_knee", "right_hip", "right_knee"),
    "lhand": ("left_wrist",),
    "rhand": ("right_wrist",),
    "jaw": (),
}


def _tube_frame(axis):
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    return axis, e1, np.cross(axis, e1)


def _tube_chart(p0, p1, radius, n_around, n_rings, cell):
    """Closed capped tube; returns local vertices, faces, per-corner uvs and ring ids."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis, e1, e2 = _tube_frame(p1 - p0)
    ang = 2 * np.pi * np.arange(n_around) / n_around
    ring_dir = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    verts, ring_of = [], []
    for r in range(n_rings):
        c = p0 + (p1 - p0) * r / (n_rings - 1)
        verts.extend(c + radius * ring_dir)
        ring_of.extend([r] * n_around)
    cap0, cap1 = len(verts), len(verts) + 1
    verts += [p0 - 0.5 * radius * axis, p1 + 0.5 * radius * axis]
    ring_of += [0, n_rings - 1]

    cu, cv = cell
    m, size = 0.01, 0.25
    lat_w, lat_h = size - 2 * m, 0.55 * size

    def lat_uv(r, k):
        return (cu + m + lat_w * k / n_around, cv + m + lat_h * r / (n_rings - 1))

    def cap_uv(center, k):
        a = 2 * np.pi * k / n_around
        return (center[0] + 0.04 * np.cos(a), center[1] + 0.04 * np.sin(a))

    faces, uvs = [], []
    for r in range(n_rings - 1):
        for k in range(n_around):
            k1 = (k + 1) % n_around
            a, b = r * n_around + k, r * n_around + k1
            c, d = (r + 1) * n_around + k1, (r + 1) * n_around + k
            # winding chosen so face normals point away from the axis
            faces += [(a, c, b), (a, d, c)]
            uvs += [
                (lat_uv(r, k), lat_uv(r + 1, k + 1), lat_uv(r, k + 1)),
                (lat_uv(r, k), lat_uv(r + 1, k), lat_uv(r + 1, k + 1)),
            ]
    c0 = (cu + 0.0625, cv + m + lat_h + 0.05)
    c1 = (cu + 0.1875, cv + m + lat_h + 0.05)
    last = (n_rings - 1) * n_around
    for k in range(n_around):
        k1 = (k + 1) % n_around
        faces.append((cap0, k, k1))
        uvs.append((c0, cap_uv(c0, -k), cap_uv(c0, -k - 1)))
        faces.append((cap1, last + k1, last + k))
        uvs.append((c1, cap_uv(c1, k + 1), cap_uv(c1, k)))
    verts = np.asarray(verts)
    faces = np.asarray(faces, dtype=np.int64)
    # make every face point outward from the segment axis
    tri = verts[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    centroid = tri.mean(axis=1)
    mid = 0.5 * (p0 + p1)
    flip = np.einsum("fd,fd->f", n, centroid - mid) < 0
    faces[flip] = faces[flip][:, ::-1]
    uvs = np.asarray(uvs)
    uvs[flip] = uvs[flip][:, ::-1]
    return verts, faces, uvs, np.asarray(ring_of)


def make_tube_body(n_around=8, n_rings=5, with_bases=True):
    """Sixteen-joint articulated tube figure, Y up, pelvis at the origin.

    Each of the fourteen segments is a closed capped tube owned by one joint
    and laid out as its own chart in a 4x4 uv grid. The ring nearest the
    parent joint blends half of the parent's transform. Shape bases scale
    height and girth; expression bases bulge the head.
    """
    names = tuple(j[0] for j in TUBE_JOINTS)
    parents = tuple(j[1] for j in TUBE_JOINTS)
    joints = np.array([j[2] for j in TUBE_JOINTS], dtype=np.float64)
    index = {n: i for i, n in enumerate(names)}

    all_v, all_f, all_uv, weights = [], [], [], []
    parts = {"head": [], "lhand": [], "rhand": []}
    girth_dirs = []
    base = 0
    for s, (owner, p0, p1, radius, part) in enumerate(TUBE_SEGMENTS):
        cell = ((s % 4) * 0.25, (s // 4) * 0.25)
        v, f, uv, ring = _tube_chart(p0, p1, radius, n_around, n_rings, cell)
        j = index[owner]
        w = np.zeros((len(v), len(names)))
        w[:, j] = 1.0
        if parents[j] >= 0:
            first = ring == 0
            w[first, j] = 0.5
            w[first, parents[j]] = 0.5
        axis = np.asarray(p1, dtype=np.float64) - np.asarray(p0, dtype=np.float64)
        axis /= np.linalg.norm(axis)
        rel = v - np.asarray(p0)
        radial = rel - np.outer(rel @ axis, axis)
        girth_dirs.append(radial)
        all_v.append(v)
        all_f.append(f + base)
        all_uv.append(uv)
        weights.append(w)
        if part in parts:
            parts[part].extend(range(base, base + len(v)))
        base += len(v)

    verts = np.concatenate(all_v)
    mesh = TriMesh(verts, np.concatenate(all_f), np.concatenate(all_uv))
    shape_basis = expr_basis = None
    if with_bases:
        radial = np.concatenate(girth_dirs)
        height = np.zeros_like(verts)
        height[:, 1] = 0.1 * verts[:, 1]
        shape_basis = np.stack([height, 0.2 * radial], axis=2)
        head = np.zeros_like(verts)
        hid = np.asarray(parts["head"])
        hc = joints[index["head"]] + np.array([0.0, 0.12, 0.0])
        head[hid] = 0.1 * (verts[hid] - hc)
        jaw = np.zeros_like(verts)
        low = hid[verts[hid, 1] < 0.7]
        jaw[low, 1] = -0.02
        expr_basis = np.stack([head, jaw], axis=2)
    groups = {g: tuple(index[n] for n in ns) for g, ns in TUBE_GROUPS.items()}
    return SkinnedBody(
        rest_mesh=mesh,
        joints=joints,
        parents=parents,
        joint_names=names,
        skin_weights=np.concatenate(weights),
        shape_basis=shape_basis,
        expr_basis=expr_basis,
        groups=groups,
        vertex_parts={k: np.asarray(v, dtype=np.int64) for k, v in parts.items()},
    )


# -- rig file ---------------------------------------------------------------

RIG_FORMAT = "dualuv-rig"
_RIG_ARRAYS = (
    ("vertices", "<f8"), ("faces", "<i8"), ("uvs", "<f8"), ("joints", "<f8"),
    ("skin_weights", "<f8"), ("shape_basis", "<f8"), ("expr_basis", "<f8"),
)


def save_rig(body, path):
    """Write ``path`` (JSON header) and ``path + '.bin'`` (little-endian payload)."""
    arrays = {
        "vertices": body.rest_mesh.vertices,
        "faces": body.rest_mesh.faces,
        "uvs": body.rest_mesh.uvs,
        "joints": body.joints,
        "skin_weights": body.skin_weights,
        "shape_basis": body.shape_basis,
        "expr_basis": body.expr_basis,
    }
    for k, ids in body.vertex_parts.items():
        arrays[f"part:{k}"] = ids
    blob = bytearray()
    table = {}
    for name, arr in arrays.items():
        dtype = dict(_RIG_ARRAYS).get(name, "<i8")
        data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        table[name] = {"offset": len(blob), "dtype": dtype, "shape": list(np.shape(arr))}
        blob += data
    bin_name = os.path.basename(path) + ".bin"
    header = {
        "format": RIG_FORMAT,
        "version": 1,
        "binary": bin_name,
        "joint_names": list(body.joint_names),
        "parents": list(body.parents),
        "groups": {g: list(ids) for g, ids in body.groups.items()},
        "arrays": table,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
    with open(os.path.join(os.path.dirname(path), bin_name), "wb") as fh:
        fh.write(bytes(blob))


def load_rig(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != RIG_FORMAT or header.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 rig file")
    with open(os.path.join(os.path.dirname(path), header["binary"]), "rb") as fh:
        blob = fh.read()
    arrays = {}
    for name, rec in header["arrays"].items():
        dtype = np.dtype(rec["dtype"])
        count = int(np.prod(rec["shape"], dtype=np.int64))
        end = rec["offset"] + count * dtype.itemsize
        if end > len(blob):
            raise ValueError(f"{path}: array {name!r} runs past the end of the payload")
        arrays[name] = np.frombuffer(blob, dtype=dtype, count=count, offset=rec["offset"]).reshape(rec["shape"])
    mesh = TriMesh(arrays["vertices"], arrays["faces"], arrays["uvs"])
    parts = {k.split(":", 1)[1]: v for k, v in arrays.items() if k.startswith("part:")}
    return SkinnedBody(
        rest_mesh=mesh,
        joints=arrays["joints"],
        parents=tuple(header["parents"]),
        joint_names=tuple(header["joint_names"]),
        skin_weights=arrays["skin_weights"],
        shape_basis=arrays["shape_basis"],
        expr_basis=arrays["expr_basis"],
        groups=header["groups"],
        vertex_parts=parts,
    )
