"""Body parameter record and its flat vector layout.

Flat order: ``theta_glob (3) | theta_body (3 Kb) | theta_lhand (3 Kl) |
theta_rhand (3 Kr) | theta_jaw (3) | beta (Nb) | psi (Np) | t (3)``, where
``Kb, Kl, Kr`` are the joint counts of the body's ``body``, ``lhand`` and
``rhand`` groups. ``theta_jaw`` is always present and is ignored by bodies
without a jaw joint.
"""

import json
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..skinning import lbs_pose

BLOCKS = ("theta_glob", "theta_body", "theta_lhand", "theta_rhand", "theta_jaw", "beta", "psi", "t")
POSE_BLOCKS = ("theta_glob", "theta_body", "theta_lhand", "theta_rhand", "theta_jaw")
_GROUP_OF = {"theta_body": "body", "theta_lhand": "lhand", "theta_rhand": "rhand"}


@dataclass(frozen=True)
class ParamLayout:
    sizes: tuple

    @classmethod
    def for_body(cls, body):
        return cls((
            ("theta_glob", 3),
            ("theta_body", 3 * body.group_size("body")),
            ("theta_lhand", 3 * body.group_size("lhand")),
            ("theta_rhand", 3 * body.group_size("rhand")),
            ("theta_jaw", 3),
            ("beta", body.n_beta),
            ("psi", body.n_psi),
            ("t", 3),
        ))

    @property
    def size(self):
        return sum(n for _, n in self.sizes)

    @property
    def slices(self):
        out, pos = {}, 0
        for name, n in self.sizes:
            out[name] = slice(pos, pos + n)
            pos += n
        return out

    def indices(self, *blocks):
        sl = self.slices
        if not blocks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(sl[b].start, sl[b].stop) for b in blocks])

    def joint_indices(self, body, joint_name):
        """Flat indices of the axis-angle slot driving ``joint_name``."""
        j = body.joint_index(joint_name)
        sl = self.slices
        for block, group in _GROUP_OF.items():
            ids = body.groups[group]
            if j in ids:
                start = sl[block].start + 3 * ids.index(j)
                return np.arange(start, start + 3)
        if body.groups["jaw"] and j == body.groups["jaw"][0]:
            return np.arange(sl["theta_jaw"].start, sl["theta_jaw"].stop)
        raise KeyError(f"joint {joint_name!r} is not driven by any pose block")


@dataclass(eq=False)
class BodyParams:
    theta_glob: np.ndarray
    theta_body: np.ndarray
    theta_lhand: np.ndarray
    theta_rhand: np.ndarray
    theta_jaw: np.ndarray
    beta: np.ndarray
    psi: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        for name in BLOCKS:
            arr = np.array(getattr(self, name), dtype=np.float64)
            if name in ("theta_body", "theta_lhand", "theta_rhand"):
                arr = arr.reshape(-1, 3)
            else:
                arr = arr.reshape(-1)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, arr)
        for name in ("theta_glob", "theta_jaw", "t"):
            if getattr(self, name).shape != (3,):
                raise ValueError(f"{name} must have 3 entries")

    @classmethod
    def zeros(cls, body, t=(0.0, 0.0, 0.0)):
        return cls(
            np.zeros(3), np.zeros((body.group_size("body"), 3)),
            np.zeros((body.group_size("lhand"), 3)), np.zeros((body.group_size("rhand"), 3)),
            np.zeros(3), np.zeros(body.n_beta), np.zeros(body.n_psi), np.asarray(t, dtype=np.float64),
        )

    def check(self, body):
        layout = ParamLayout.for_body(body)
        for name, n in layout.sizes:
            if getattr(self, name).size != n:
                raise ValueError(f"{name} has {getattr(self, name).size} entries, body expects {n}")
        return layout

    def to_vector(self):
        return np.concatenate([getattr(self, b).ravel() for b in BLOCKS])

    @classmethod
    def from_vector(cls, body, vec):
        layout = ParamLayout.for_body(body)
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.size != layout.size:
            raise ValueError(f"parameter vector has {vec.size} entries, body expects {layout.size}")
        sl = layout.slices
        return cls(**{b: vec[sl[b]].copy() for b in BLOCKS})

    def copy(self):
        return BodyParams(**{b: getattr(self, b).copy() for b in BLOCKS})

    def to_dict(self):
        return {b: getattr(self, b).tolist() for b in BLOCKS}

    @classmethod
    def from_dict(cls, d):
        missing = [b for b in BLOCKS if b not in d]
        if missing:
            raise ValueError(f"parameter record is missing {missing}")
        return cls(**{b: np.asarray(d[b], dtype=np.float64) for b in BLOCKS})


def save_params(params, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(), fh, indent=1)
        fh.write("\n")


def load_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        return BodyParams.from_dict(json.load(fh))


def as_vector(body, params):
    """Flat vector (array or dual) from a :class:`BodyParams` or a vector."""
    if isinstance(params, BodyParams):
        params.check(body)
        return params.to_vector()
    if ad.is_dual(params):
        return params
    return np.asarray(params, dtype=np.float64).reshape(-1)


def joint_axis_angles(body, vec, layout=None):
    """``(J, 3)`` local axis-angles; joints outside every group stay zero."""
    layout = layout or ParamLayout.for_body(body)
    sl = layout.slices
    rows = [np.zeros(3)] * body.n_joints
    for block, group in _GROUP_OF.items():
        ids = body.groups[group]
        if ids:
            block_vals = vec[sl[block]].reshape(len(ids), 3)
            for k, j in enumerate(ids):
                rows[j] = block_vals[k]
    if body.groups["jaw"]:
        rows[body.groups["jaw"][0]] = vec[sl["theta_jaw"]]
    return ad.stack(rows, axis=0)


def pose_body(body, params, rest_vertices=None, layout=None):
    """Skin ``body`` with a parameter record or flat vector (array or dual)."""
    vec = as_vector(body, params)
    layout = layout or ParamLayout.for_body(body)
    if ad.value(vec).shape != (layout.size,):
        raise ValueError(f"parameter vector has {ad.value(vec).size} entries, body expects {layout.size}")
    sl = layout.slices
    return lbs_pose(
        body,
        joint_aa=joint_axis_angles(body, vec, layout),
        global_aa=vec[sl["theta_glob"]],
        translation=vec[sl["t"]],
        beta=vec[sl["beta"]],
        psi=vec[sl["psi"]],
        rest_vertices=rest_vertices,
    )
