"""Three-stage robust fitting of a skinned body to 2D observations."""

from .adam import AdamResult, OptimizationError, adam_minimize, value_and_grad
from .head import HeadCorrespondence, head_override, load_correspondence
from .observations import (
    KeypointSet, Keypoints2D, active_keypoints, load_keypoints, resolve_labels, save_keypoints,
)
from .params import BodyParams, ParamLayout, load_params, pose_body, save_params
from .stages import (
    DEFAULT_STEPS, STAGE_WEIGHTS, FrameObservation, OptimConfig, StageResult, StageWeights,
    fit_all, free_indices, run_stage, side_back_constraints, stage_body, stage_hand, stage_head,
)
from .terms import (
    GMOF_SIGMA, TrackerWarning, dense_vertex_loss, gmof, mask_inside_loss, pose_reg_loss,
    reprojection_loss, side_alignment_loss, smoothness_loss, upright_loss,
)

__all__ = [
    "AdamResult", "BodyParams", "DEFAULT_STEPS", "FrameObservation", "GMOF_SIGMA", "HeadCorrespondence",
    "KeypointSet", "Keypoints2D", "OptimConfig", "OptimizationError", "ParamLayout", "STAGE_WEIGHTS",
    "StageResult", "StageWeights", "TrackerWarning", "active_keypoints", "adam_minimize",
    "dense_vertex_loss", "fit_all", "free_indices", "gmof", "head_override", "load_correspondence",
    "load_keypoints", "load_params", "mask_inside_loss", "pose_body", "pose_reg_loss",
    "reprojection_loss", "resolve_labels", "run_stage", "save_keypoints", "save_params",
    "side_alignment_loss", "side_back_constraints", "smoothness_loss", "stage_body", "stage_hand",
    "stage_head", "upright_loss", "value_and_grad",
]
