"""Image reconstruction and gaussian-attribute regularizers.

Offset, scale, ratio and opacity terms return ``(value, grad)`` when asked
for ``grad=True``; the gradient has the shape of the input.
"""

import json
from dataclasses import dataclass, field

import numpy as np

SCALE_RATIO = 9.0
OPACITY_TARGET = 0.8
LOG_CLAMP = 1e-6
PATCH_SIZE = 8
DEFAULT_WEIGHTS = {"offset": 1.0, "scale": 0.1, "ratio": 1.0, "hand": 0.1, "opacity": 0.1}


def l1_image_loss(pred, ref, mask=None):
    """Mean absolute difference over all pixels and channels, or over the
    pixels selected by ``mask`` when given."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    diff = np.abs(pred - ref)
    if mask is None:
        return float(diff.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape[:2]:
        raise ValueError("mask must match the image height and width")
    if not mask.any():
        return 0.0
    return float(diff[mask].mean())


def _rows(x, width):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"expected an (N, {width}) array, got {x.shape}")
    return x


def offset_reg(offsets, grad=False):
    """Mean Euclidean norm of the per-gaussian offsets."""
    d = _rows(offsets, 3)
    if not len(d):
        return (0.0, np.zeros_like(d)) if grad else 0.0
    n = np.linalg.norm(d, axis=1)
    val = float(n.mean())
    if not grad:
        return val
    safe = np.where(n > 0, n, 1.0)
    g = np.where((n > 0)[:, None], d / safe[:, None], 0.0) / len(d)
    return val, g


def _check_scales(s):
    s = _rows(s, 3)
    if np.any(~(s > 0)):
        raise ValueError("scales must be strictly positive")
    return s


def scale_reg(scales, grad=False):
    """Mean over gaussians of the summed axis scales."""
    s = _check_scales(scales)
    if not len(s):
        return (0.0, np.zeros_like(s)) if grad else 0.0
    val = float(s.sum(axis=1).mean())
    if not grad:
        return val
    return val, np.full_like(s, 1.0 / len(s))


def ratio_reg(scales, r=SCALE_RATIO, grad=False):
    """Mean hinge ``max(max(s) / min(s) - r, 0)`` on scale anisotropy."""
    s = _check_scales(scales)
    if not len(s):
        return (0.0, np.zeros_like(s)) if grad else 0.0
    hi = s.argmax(axis=1)
    lo = s.argmin(axis=1)
    idx = np.arange(len(s))
    smax, smin = s[idx, hi], s[idx, lo]
    excess = smax / smin - r
    val = float(np.maximum(excess, 0.0).mean())
    if not grad:
        return val
    g = np.zeros_like(s)
    act = excess > 0
    # max and min share an index only for isotropic rows, which are inactive
    g[idx[act], hi[act]] += 1.0 / smin[act]
    g[idx[act], lo[act]] -= smax[act] / smin[act] ** 2
    return val, g / len(s)


def extract_patches(color_map, region, size=PATCH_SIZE):
    """Non-overlapping ``size x size`` tiles of ``color_map`` lying entirely
    inside the boolean ``region`` mask, each flattened to a vector."""
    color_map = np.asarray(color_map, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if color_map.shape[:2] != region.shape:
        raise ValueError("region mask must match the map size")
    h, w = region.shape
    out = []
    for i in range(0, h - size + 1, size):
        for j in range(0, w - size + 1, size):
            if region[i:i + size, j:j + size].all():
                out.append(color_map[i:i + size, j:j + size].ravel())
    return np.array(out).reshape(len(out), -1) if out else np.zeros((0, size * size * (color_map.size // (h * w))))


def hand_consistency(hand_patches, face_patches, grad=False):
    """Sum over hand patches of the distance to the nearest face patch.

    Face patches act as constants, so the gradient is with respect to the
    hand patches only.
    """
    hand = np.asarray(hand_patches, dtype=np.float64)
    face = np.asarray(face_patches, dtype=np.float64)
    hand = hand.reshape(len(hand), -1)
    face = face.reshape(len(face), -1)
    if not len(face):
        raise ValueError("face patch set is empty")
    if len(hand) and hand.shape[1] != face.shape[1]:
        raise ValueError("hand and face patches must have equal size")
    if not len(hand):
        return (0.0, np.zeros_like(hand)) if grad else 0.0
    diff = hand[:, None, :] - face[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    nearest = dist.argmin(axis=1)
    d = dist[np.arange(len(hand)), nearest]
    val = float(d.sum())
    if not grad:
        return val
    delta = hand - face[nearest]
    safe = np.where(d > 0, d, 1.0)
    return val, np.where((d > 0)[:, None], delta / safe[:, None], 0.0)


def patch_means(opacity, patch_size=PATCH_SIZE):
    """Means of the ``patch_size`` tiles of an ``(H, W)`` map; edge tiles that
    do not fit are averaged over the texels they have."""
    a = np.asarray(opacity, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise ValueError("opacity map must be (H, W)")
    if patch_size < 1:
        raise ValueError("patch size must be positive")
    h, w = a.shape
    rows = np.arange(h) // patch_size
    cols = np.arange(w) // patch_size
    ph, pw = rows[-1] + 1, cols[-1] + 1
    label = (rows[:, None] * pw + cols[None, :]).ravel()
    sums = np.bincount(label, weights=a.ravel(), minlength=ph * pw)
    counts = np.bincount(label, minlength=ph * pw).astype(np.float64)
    return (sums / counts).reshape(ph, pw), label.reshape(h, w), counts


def opacity_patch_loss(opacity, patch_size=PATCH_SIZE, alpha_ref=OPACITY_TARGET, grad=False):
    """Binary cross-entropy of patch mean opacities against ``alpha_ref``."""
    a = np.asarray(opacity, dtype=np.float64)
    mu, label, counts = patch_means(a, patch_size)
    mu = mu.ravel()
    m = np.clip(mu, LOG_CLAMP, 1.0 - LOG_CLAMP)
    terms = -(alpha_ref * np.log(m) + (1.0 - alpha_ref) * np.log(1.0 - m))
    val = float(terms.mean())
    if not grad:
        return val
    dm = -(alpha_ref / m - (1.0 - alpha_ref) / (1.0 - m)) / len(mu)
    dm = np.where((mu > LOG_CLAMP) & (mu < 1.0 - LOG_CLAMP), dm, 0.0)
    g = (dm / counts)[label]
    return val, g.reshape(a.shape)


@dataclass
class LossReport:
    terms: dict
    weights: dict
    total: float = field(init=False)

    def __post_init__(self):
        self.total = float(sum(self.weights[k] * self.terms[k] for k in self.terms))

    def to_json(self):
        return json.dumps({"terms": self.terms, "weights": self.weights, "total": self.total}, sort_keys=True)


def total_regularization(terms, weights=None):
    """Weighted sum of the named regularizers (offset, scale, ratio, hand,
    opacity); ``weights`` overrides individual defaults."""
    w = dict(DEFAULT_WEIGHTS)
    if weights:
        unknown = set(weights) - set(w)
        if unknown:
            raise KeyError(f"unknown loss weights: {sorted(unknown)}")
        w.update({k: float(v) for k, v in weights.items()})
    if any(v < 0 for v in w.values()):
        raise ValueError("loss weights must be non-negative")
    unknown = set(terms) - set(w)
    if unknown:
        raise KeyError(f"unknown loss terms: {sorted(unknown)}")
    full = {k: float(terms.get(k, 0.0)) for k in w}
    return LossReport(full, w)
