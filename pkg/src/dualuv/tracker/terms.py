"""Tracker objective terms.

Every term accepts a :class:`BodyParams`, a flat vector or a seeded
:class:`autodiff.Dual` vector; in the dual case the result is a scalar dual
carrying the gradient with respect to that vector. The ``*_posed`` variants
take already skinned geometry so a stage can share one skinning pass
between terms.
"""

import warnings

import numpy as np

from .. import autodiff as ad
from ..uvscatter import bilinear_sample
from .observations import CONF_THRESHOLD, active_keypoints
from .params import POSE_BLOCKS, ParamLayout, as_vector, pose_body

GMOF_SIGMA = 100.0
VERTICAL_AXIS = (0.0, 1.0, 0.0)
SIDE_PAIRS = (("left_ear", "right_ear"), ("left_shoulder", "right_shoulder"), ("left_hip", "right_hip"))


class TrackerWarning(UserWarning):
    """A term degenerated to zero because its inputs are empty."""


def _scalar(x):
    return x if ad.is_dual(x) else float(x)


def gmof(residual, sigma=GMOF_SIGMA, derivative=False):
    """Geman-McClure penalty ``s^2 r^2 / (r^2 + s^2)`` of residual norms."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    r = np.asarray(residual, dtype=np.float64)
    s2 = sigma * sigma
    r2 = r * r
    val = s2 * r2 / (r2 + s2)
    if not derivative:
        return val
    return val, 2.0 * s2 * s2 * r / (r2 + s2) ** 2


def gmof_squared(r2, sigma=GMOF_SIGMA):
    """Geman-McClure from squared residuals; smooth at zero for duals."""
    s2 = sigma * sigma
    return s2 * r2 / (r2 + s2)


def _points(posed, resolved):
    joints = resolved.index[resolved.is_joint]
    verts = resolved.index[~resolved.is_joint]
    order = np.concatenate([np.flatnonzero(resolved.is_joint), np.flatnonzero(~resolved.is_joint)])
    pts = ad.concatenate([posed.joints[joints], posed.vertices[verts]], axis=0)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return pts[inv]


def reprojection_posed(posed, cam, targets, resolved, sigma=GMOF_SIGMA):
    """Sum of gmof over keypoints already filtered to the active set."""
    if not len(targets):
        return 0.0
    pix, _, _ = cam.project(_points(posed, resolved))
    d = pix - targets
    return gmof_squared(ad.dot_last(d, d), sigma).sum()


def reprojection_loss(params, body, cam, kps, conf_thresh=CONF_THRESHOLD, exclude_wrists=False,
                      sigma=GMOF_SIGMA, drop_face=False):
    """Robust reprojection error of confident, non-excluded keypoints."""
    keep, resolved = active_keypoints(body, kps, conf_thresh, exclude_wrists, drop_face)
    if not keep.any():
        warnings.warn("no keypoint passes the confidence threshold; reprojection term is 0",
                      TrackerWarning, stacklevel=2)
        return 0.0
    posed = pose_body(body, params)
    sub = type(resolved)(resolved.is_joint[keep], resolved.index[keep])
    return _scalar(reprojection_posed(posed, cam, kps.xy[keep], sub, sigma))


def dense_vertex_loss(params, body, cam, kps, sigma=GMOF_SIGMA, conf_thresh=0.0):
    """Dense correspondence term: gmof over labelled surface points."""
    return reprojection_loss(params, body, cam, kps, conf_thresh=conf_thresh, sigma=sigma)


def mask_inside_posed(posed, cam, distfield, slack=0.0):
    """Mean over vertices of the bilinear distance-to-mask at their projection.

    Distances up to ``slack`` pixels are free; vertices behind the camera
    contribute zero.
    """
    if distfield.empty:
        return 0.0
    pix, _, behind = cam.project(posed.vertices)
    d = bilinear_sample(distfield.distance, pix)
    excess = ad.where(ad.value(d) > slack, d - slack, 0.0)
    excess = ad.where(behind, 0.0, excess)
    return excess.mean()


def mask_inside_loss(params, body, cam, distfield, slack=0.0):
    if distfield.empty:
        warnings.warn("mask is empty; silhouette term is 0", TrackerWarning, stacklevel=2)
        return 0.0
    return _scalar(mask_inside_posed(pose_body(body, params), cam, distfield, slack))


def upright_posed(posed, body, vertical_axis=VERTICAL_AXIS):
    up = np.asarray(vertical_axis, dtype=np.float64)
    up = up / np.linalg.norm(up)
    d = posed.joints[body.joint_index("neck")] - posed.joints[body.joint_index("pelvis")]
    return 1.0 - ad.dot_last(d, up) / ad.norm_last(d)


def upright_loss(params, body, vertical_axis=VERTICAL_AXIS):
    """``1 - cos`` of the angle between pelvis-to-neck and the vertical."""
    return _scalar(upright_posed(pose_body(body, params), body, vertical_axis))


def smoothness_posed(posed_seq, cam):
    """Mean squared second difference of projected vertices over interior
    frames; ``cam`` is one camera or one per frame."""
    if len(posed_seq) < 3:
        return 0.0
    cams = cam if isinstance(cam, (list, tuple)) else [cam] * len(posed_seq)
    pix = [c.project(p.vertices)[0] for c, p in zip(cams, posed_seq)]
    acc = [pix[k + 1] - 2.0 * pix[k] + pix[k - 1] for k in range(1, len(pix) - 1)]
    sq = ad.stack([ad.dot_last(a, a) for a in acc], axis=0)
    return sq.mean()


def smoothness_loss(param_seq, body, cam):
    if len(param_seq) < 3:
        warnings.warn("temporal smoothness needs at least 3 frames; term is 0", TrackerWarning, stacklevel=2)
        return 0.0
    return _scalar(smoothness_posed([pose_body(body, p) for p in param_seq], cam))


def pose_reg_vector(vec, init_vec, layout):
    """Squared distance of the pose blocks (translation, shape, expression excluded)."""
    idx = layout.indices(*POSE_BLOCKS)
    d = vec[idx] - init_vec[idx]
    return (d * d).sum()


def pose_reg_loss(params, init_params, body=None):
    """Squared L2 distance between the pose blocks of two parameter sets.

    Flat vectors need ``body`` to locate the pose blocks.
    """
    if body is None:
        a = np.concatenate([getattr(params, b).ravel() for b in POSE_BLOCKS])
        b = np.concatenate([getattr(init_params, b).ravel() for b in POSE_BLOCKS])
        return float(((a - b) ** 2).sum())
    layout = ParamLayout.for_body(body)
    return _scalar(pose_reg_vector(as_vector(body, params), as_vector(body, init_params), layout))


def side_alignment_posed(posed, body, view_direction):
    """Mean of ``1 - |cos|`` between left-to-right pairs and the view axis."""
    view = np.asarray(view_direction, dtype=np.float64)
    view = view / np.linalg.norm(view)
    terms = []
    for a, b in SIDE_PAIRS:
        d = posed.joints[body.joint_index(b)] - posed.joints[body.joint_index(a)]
        terms.append(1.0 - ad.abs(ad.dot_last(d, view) / ad.norm_last(d)))
    return ad.stack(terms, axis=0).mean()


def side_alignment_loss(params, body, cam):
    return _scalar(side_alignment_posed(pose_body(body, params), body, cam.view_direction))
