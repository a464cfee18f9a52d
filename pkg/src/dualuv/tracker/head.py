"""Head-region vertex replacement before skinning.

An external head model supplies vertices in its own frame together with a
correspondence table to body vertex ids. A similarity transform fitted on
the correspondences moves the head into the body's rest frame, and the
mapped positions then override the body's rest vertices.
"""

import json
from dataclasses import dataclass

import numpy as np

from ..transforms import estimate_similarity


@dataclass(frozen=True, eq=False)
class HeadCorrespondence:
    body_vertex: np.ndarray
    head_vertex: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.body_vertex, dtype=np.int64).reshape(-1)
        h = np.asarray(self.head_vertex, dtype=np.int64).reshape(-1)
        if len(b) != len(h):
            raise ValueError("correspondence columns must have equal length")
        if len(np.unique(b)) != len(b):
            raise ValueError("a body vertex appears twice in the correspondence table")
        object.__setattr__(self, "body_vertex", b)
        object.__setattr__(self, "head_vertex", h)


def load_correspondence(path):
    """JSON ``{"body_vertex": [...], "head_vertex": [...]}``."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        return HeadCorrespondence(d["body_vertex"], d["head_vertex"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing column {exc.args[0]!r}") from None


def head_override(body, head_vertices, table, rest_vertices=None):
    """Rest vertices with the corresponded body vertices replaced by the
    similarity-aligned head vertices. Returns ``(vertices, transform)``."""
    rest = body.rest_mesh.vertices if rest_vertices is None else np.asarray(rest_vertices, dtype=np.float64)
    head_vertices = np.asarray(head_vertices, dtype=np.float64).reshape(-1, 3)
    if table.body_vertex.size and (table.body_vertex.min() < 0 or table.body_vertex.max() >= len(rest)):
        raise IndexError("body vertex id out of range")
    if table.head_vertex.size and (table.head_vertex.min() < 0 or table.head_vertex.max() >= len(head_vertices)):
        raise IndexError("head vertex id out of range")
    src = head_vertices[table.head_vertex]
    sim = estimate_similarity(src, rest[table.body_vertex])
    out = np.array(rest, dtype=np.float64)
    out[table.body_vertex] = sim.apply(src)
    return out, sim
