"""2D keypoint observations and their resolution against a rig.

Keypoint files are JSON, either a plain list of ``{label, x, y, conf}``
records or an object with ``keypoints`` and optional ``dense_head`` /
``dense_hand`` lists of the same records. A label is a joint name of the
body or ``v<index>`` for a mesh vertex.
"""

import json
import re
from dataclasses import dataclass

import numpy as np

CONF_THRESHOLD = 0.6
WRIST_JOINTS = ("left_wrist", "right_wrist")
_VERTEX_LABEL = re.compile(r"^v(\d+)$")


@dataclass(frozen=True, eq=False)
class Keypoints2D:
    xy: np.ndarray
    conf: np.ndarray
    labels: tuple

    def __post_init__(self):
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        conf = np.array(self.conf, dtype=np.float64).reshape(-1)
        labels = tuple(str(s) for s in self.labels)
        if not (len(xy) == len(conf) == len(labels)):
            raise ValueError("keypoint positions, confidences and labels must align")
        if np.any(~np.isfinite(xy)):
            raise ValueError("keypoint positions must be finite")
        if np.any(~((conf >= 0.0) & (conf <= 1.0))):
            raise ValueError("keypoint confidences must lie in [0, 1]")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "conf", conf)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0), ())

    def subset(self, keep):
        keep = np.asarray(keep, dtype=bool)
        return Keypoints2D(self.xy[keep], self.conf[keep], tuple(np.asarray(self.labels, dtype=object)[keep]))

    def to_records(self):
        return [
            {"label": lab, "x": float(x), "y": float(y), "conf": float(c)}
            for lab, (x, y), c in zip(self.labels, self.xy, self.conf)
        ]

    @classmethod
    def from_records(cls, records):
        try:
            return cls(
                [(r["x"], r["y"]) for r in records],
                [r.get("conf", 1.0) for r in records],
                [r["label"] for r in records],
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed keypoint record: {exc}") from None


@dataclass(frozen=True, eq=False)
class KeypointSet:
    keypoints: Keypoints2D
    dense_head: Keypoints2D = None
    dense_hand: Keypoints2D = None


def load_keypoints(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return KeypointSet(Keypoints2D.from_records(data))
    if not isinstance(data, dict) or "keypoints" not in data:
        raise ValueError(f"{path}: expected a list of keypoints or an object with 'keypoints'")
    dense = {k: Keypoints2D.from_records(data[k]) if data.get(k) else None for k in ("dense_head", "dense_hand")}
    return KeypointSet(Keypoints2D.from_records(data["keypoints"]), **dense)


def save_keypoints(kset, path):
    if isinstance(kset, Keypoints2D):
        kset = KeypointSet(kset)
    out = {"keypoints": kset.keypoints.to_records()}
    for k in ("dense_head", "dense_hand"):
        if getattr(kset, k) is not None:
            out[k] = getattr(kset, k).to_records()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True)
class ResolvedLabels:
    """Per keypoint: whether it addresses a joint, and the joint or vertex id."""

    is_joint: np.ndarray
    index: np.ndarray


def resolve_labels(body, labels):
    names = {n: i for i, n in enumerate(body.joint_names)}
    is_joint = np.zeros(len(labels), dtype=bool)
    index = np.zeros(len(labels), dtype=np.int64)
    bad = []
    n_v = body.rest_mesh.n_vertices
    for k, lab in enumerate(labels):
        if lab in names:
            is_joint[k] = True
            index[k] = names[lab]
            continue
        m = _VERTEX_LABEL.match(lab)
        if m and int(m.group(1)) < n_v:
            index[k] = int(m.group(1))
        else:
            bad.append(lab)
    if bad:
        raise KeyError(f"unresolvable keypoint labels: {bad}")
    return ResolvedLabels(is_joint, index)


def head_joint_ids(body):
    """The head joint and every joint below it in the tree."""
    head = body.joint_index("head")
    ids = {head}
    for j, p in enumerate(body.parents):
        if p in ids:
            ids.add(j)
    return ids


def is_face_keypoint(body, resolved):
    """Keypoints on the head: joints in the head subtree or head-part vertices."""
    heads = head_joint_ids(body)
    head_verts = set(body.vertex_parts.get("head", np.zeros(0, dtype=np.int64)).tolist())
    return np.array([
        (int(i) in heads) if j else (int(i) in head_verts)
        for j, i in zip(resolved.is_joint, resolved.index)
    ], dtype=bool)


def active_keypoints(body, kps, conf_thresh=CONF_THRESHOLD, exclude_wrists=False, drop_face=False):
    """Boolean selection of keypoints that enter the reprojection term."""
    resolved = resolve_labels(body, kps.labels)
    keep = kps.conf > conf_thresh
    if exclude_wrists:
        wrists = {body.joint_index(n) for n in WRIST_JOINTS}
        keep &= ~np.array([j and int(i) in wrists for j, i in zip(resolved.is_joint, resolved.index)], dtype=bool)
    if drop_face:
        keep &= ~is_face_keypoint(body, resolved)
    return keep, resolved
