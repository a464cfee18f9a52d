"""Body, head and hand refinement stages.

Each stage minimizes a weighted sum of the terms in :mod:`.terms` over its
own subset of the flat parameter vector; everything outside that subset is
copied through untouched. Gradients come from forward-mode duals seeded on
the free entries only.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .. import autodiff as ad
from ..raster import DistanceField, distance_transform
from .adam import BETAS, ADAM_EPS, LEARNING_RATE, adam_minimize, value_and_grad
from .observations import CONF_THRESHOLD, KeypointSet, Keypoints2D, active_keypoints, resolve_labels
from .params import BodyParams, ParamLayout, pose_body
from .terms import (
    GMOF_SIGMA, VERTICAL_AXIS, mask_inside_posed, pose_reg_vector, reprojection_posed,
    side_alignment_posed, smoothness_posed, upright_posed,
)

STAGES = ("body", "head", "hand")
VIEWS = ("front", "left", "right", "back")
DEFAULT_STEPS = {"body": 300, "head": 200, "hand": 200}
SIDE_WEIGHT = 1e4
HAND_STAGE_JOINTS = ("left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist")


@dataclass(frozen=True)
class StageWeights:
    reproj: float
    reg: float
    mask: float
    up: float
    smo: float
    head: float = 0.0
    hand: float = 0.0
    side: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (v >= 0.0 and np.isfinite(v)):
                raise ValueError(f"stage weight {k} must be finite and non-negative")


STAGE_WEIGHTS = {
    "body": StageWeights(reproj=1e2, reg=1e2, mask=1e2, up=1e4, smo=5e2),
    "head": StageWeights(reproj=1e2, reg=1e2, mask=1e2, up=1e4, smo=5e4, head=1e3),
    "hand": StageWeights(reproj=1e1, reg=1e1, mask=1e2, up=1e4, smo=5e5, head=1e3, hand=1e2),
}


@dataclass(frozen=True)
class OptimConfig:
    steps: int = None
    lr: float = LEARNING_RATE
    betas: tuple = BETAS
    eps: float = ADAM_EPS
    sigma: float = GMOF_SIGMA
    conf_thresh: float = CONF_THRESHOLD
    mask_slack: float = 0.0
    vertical_axis: tuple = VERTICAL_AXIS

    def __post_init__(self):
        if self.steps is not None and self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not (self.lr > 0 and self.eps > 0 and self.sigma > 0):
            raise ValueError("lr, eps and sigma must be positive")
        if not 0.0 <= self.conf_thresh <= 1.0:
            raise ValueError("confidence threshold must lie in [0, 1]")
        if self.mask_slack < 0:
            raise ValueError("mask slack must be non-negative")


@dataclass(frozen=True, eq=False)
class FrameObservation:
    """Everything observed in one image: camera, keypoints, foreground mask."""

    camera: object
    keypoints: KeypointSet = None
    mask: DistanceField = None
    view: str = "front"
    upper_body: bool = False

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}; expected one of {VIEWS}")
        kps = self.keypoints
        if isinstance(kps, Keypoints2D):
            object.__setattr__(self, "keypoints", KeypointSet(kps))
        elif kps is None:
            object.__setattr__(self, "keypoints", KeypointSet(Keypoints2D.empty()))
        if self.mask is not None and not isinstance(self.mask, DistanceField):
            object.__setattr__(self, "mask", distance_transform(self.mask))


@dataclass(frozen=True)
class ViewConstraints:
    weights: StageWeights
    freeze_translation: bool
    upright: bool


def side_back_constraints(view, weights, upper_body=False):
    """Adjust stage weights for the viewing direction.

    Side views add the pair-alignment term, drop the dense head term and
    freeze translation during the body stage. Back views drop every
    keypoint-driven term and keep the silhouette and upright priors.
    The upright prior is active for upper-body inputs and back views.
    """
    if view not in VIEWS:
        raise ValueError(f"unknown view {view!r}; expected one of {VIEWS}")
    upright = upper_body or view == "back"
    if view in ("left", "right"):
        return ViewConstraints(replace(weights, head=0.0, side=weights.side or SIDE_WEIGHT), True, upright)
    if view == "back":
        return ViewConstraints(replace(weights, reproj=0.0, head=0.0, hand=0.0), False, True)
    return ViewConstraints(weights, False, upright)


def free_indices(stage, body, layout=None, freeze_translation=False):
    """Flat indices a stage may update."""
    layout = layout or ParamLayout.for_body(body)
    if stage == "body":
        blocks = ["theta_glob", "theta_body", "theta_lhand", "theta_rhand"]
        if not freeze_translation:
            blocks.append("t")
        return layout.indices(*blocks)
    if stage == "head":
        return np.sort(np.concatenate([free_indices("body", body, layout, freeze_translation),
                                       layout.indices("beta", "psi")]))
    if stage == "hand":
        return np.sort(np.concatenate([layout.joint_indices(body, n) for n in HAND_STAGE_JOINTS]))
    raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")


def embed(base, free, x):
    """``base`` with ``base[free] = x``; a dual ``x`` yields a dual result."""
    if not ad.is_dual(x):
        out = base.copy()
        out[free] = x
        return out
    val = base.copy()
    val[free] = x.val
    eps = np.zeros((base.size, x.nparams))
    eps[free] = x.eps
    return ad.Dual(val, eps)


@dataclass
class _FrameTerms:
    obs: FrameObservation
    weights: StageWeights
    upright: bool
    kp_xy: np.ndarray
    kp_res: object
    head_xy: np.ndarray = None
    head_res: object = None
    hand_xy: np.ndarray = None
    hand_res: object = None
    flags: list = field(default_factory=list)


def _dense(body, kps):
    if kps is None or not len(kps):
        return None, None
    return kps.xy, resolve_labels(body, kps.labels)


def _prepare(stage, body, obs, weights, optim):
    vc = side_back_constraints(obs.view, weights, obs.upper_body)
    w = vc.weights
    if not vc.upright:
        w = replace(w, up=0.0)
    if obs.mask is None or obs.mask.empty:
        w = replace(w, mask=0.0)
    kset = obs.keypoints
    keep, resolved = active_keypoints(
        body, kset.keypoints, optim.conf_thresh,
        exclude_wrists=obs.upper_body, drop_face=(stage == "hand"),
    )
    sub = type(resolved)(resolved.is_joint[keep], resolved.index[keep])
    frame = _FrameTerms(obs, w, vc.upright, kset.keypoints.xy[keep], sub)
    if w.reproj and not keep.any():
        frame.flags.append("no active keypoints")
    if stage in ("head", "hand") and w.head:
        frame.head_xy, frame.head_res = _dense(body, kset.dense_head)
    if stage == "hand" and w.hand:
        frame.hand_xy, frame.hand_res = _dense(body, kset.dense_hand)
    return frame, vc.freeze_translation


@dataclass
class StageResult:
    params: list
    trace: list
    stage: str
    free: np.ndarray
    flags: list

    @property
    def final(self):
        return self.params[0] if len(self.params) == 1 else self.params


def stage_objective(stage, body, frames, bases, prior, free, optim, rest_vertices=None, layout=None):
    """Build ``loss(x)`` over the concatenated free entries of every frame."""
    layout = layout or ParamLayout.for_body(body)
    n = len(free)

    def loss(x):
        total = 0.0
        posed_seq = []
        for f, (frame, base) in enumerate(zip(frames, bases)):
            vec = embed(base, free, x[f * n:(f + 1) * n])
            posed = pose_body(body, vec, rest_vertices, layout)
            posed_seq.append(posed)
            w, cam = frame.weights, frame.obs.camera
            if w.reproj and len(frame.kp_xy):
                total = total + w.reproj * reprojection_posed(posed, cam, frame.kp_xy, frame.kp_res, optim.sigma)
            if w.head and frame.head_xy is not None:
                total = total + w.head * reprojection_posed(posed, cam, frame.head_xy, frame.head_res, optim.sigma)
            if w.hand and frame.hand_xy is not None:
                total = total + w.hand * reprojection_posed(posed, cam, frame.hand_xy, frame.hand_res, optim.sigma)
            if w.mask:
                total = total + w.mask * mask_inside_posed(posed, cam, frame.obs.mask, optim.mask_slack)
            if w.up:
                total = total + w.up * upright_posed(posed, body, optim.vertical_axis)
            if w.side:
                total = total + w.side * side_alignment_posed(posed, body, cam.view_direction)
            if w.reg:
                total = total + w.reg * pose_reg_vector(vec, prior[f], layout)
        smo = frames[0].weights.smo
        if smo and len(posed_seq) >= 3:
            total = total + smo * smoothness_posed(posed_seq, [fr.obs.camera for fr in frames])
        return total

    return loss


def run_stage(stage, body, init, observations, weights=None, optim=None, prior=None, rest_vertices=None):
    """Refine one or more frames with one stage.

    ``init`` is a :class:`BodyParams` or a list of them (one per frame), with
    ``observations`` matching. ``prior`` is the estimate the pose prior pulls
    toward (defaults to ``init``). Returns a :class:`StageResult`.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    single = isinstance(init, BodyParams)
    inits = [init] if single else list(init)
    obs = [observations] if isinstance(observations, FrameObservation) else list(observations)
    if len(inits) != len(obs) or not inits:
        raise ValueError("need one observation per frame")
    priors = inits if prior is None else ([prior] if isinstance(prior, BodyParams) else list(prior))
    weights = weights or STAGE_WEIGHTS[stage]
    optim = optim or OptimConfig()
    steps = DEFAULT_STEPS[stage] if optim.steps is None else optim.steps
    layout = ParamLayout.for_body(body)
    for p in inits + priors:
        p.check(body)

    prepared = [_prepare(stage, body, o, weights, optim) for o in obs]
    frames = [p[0] for p in prepared]
    freeze_t = stage == "body" and any(p[1] for p in prepared)
    free = free_indices(stage, body, layout, freeze_t)
    bases = [p.to_vector() for p in inits]
    prior_vecs = [p.to_vector() for p in priors]
    x0 = np.concatenate([b[free] for b in bases])
    loss = stage_objective(stage, body, frames, bases, prior_vecs, free, optim, rest_vertices, layout)
    res = adam_minimize(value_and_grad(loss), x0, steps, optim.lr, optim.betas, optim.eps)

    out = []
    n = len(free)
    for f, base in enumerate(bases):
        vec = base.copy()
        vec[free] = res.x[f * n:(f + 1) * n]
        out.append(BodyParams.from_vector(body, vec))
    flags = [f"frame {k}: {msg}" for k, fr in enumerate(frames) for msg in fr.flags]
    if frames[0].weights.smo and len(frames) < 3 and len(frames) > 1:
        flags.append("temporal smoothness needs at least 3 frames; term skipped")
    return StageResult(out, res.trace, stage, free, flags)


def stage_body(init, body, observations, weights=None, optim=None, **kw):
    return run_stage("body", body, init, observations, weights, optim, **kw)


def stage_head(init, body, observations, weights=None, optim=None, **kw):
    return run_stage("head", body, init, observations, weights, optim, **kw)


def stage_hand(init, body, observations, weights=None, optim=None, **kw):
    return run_stage("hand", body, init, observations, weights, optim, **kw)


def fit_all(init, body, observations, weights=None, optim=None, rest_vertices=None):
    """Body, then head, then hand; the pose prior stays on ``init``.

    ``weights`` and ``optim`` may be dicts keyed by stage name.
    """
    weights = weights or {}
    optim = optim or {}
    results = {}
    current = init
    for stage in STAGES:
        res = run_stage(stage, body, current, observations, weights.get(stage), optim.get(stage),
                        prior=init, rest_vertices=rest_vertices)
        results[stage] = res
        current = res.params[0] if isinstance(init, BodyParams) else res.params
    return results
