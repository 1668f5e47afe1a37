from .rotations import drodrigues, rodrigues, rodrigues_batch, skew, wrap_axis_angle
from .model import (BodyModel, PoseParams, ShapeParams, blended_rotations,
                    body_part, forward_kinematics, parts_compatible,
                    pose_features, pose_offsets, posed_joints, shaped_rest, skin)
from .mannequin import (INFLATE_PER_UNIT, JOINT_NAMES, PARENTS, SCALE_PER_UNIT,
                        MannequinSpec, make_mannequin)
from .prior import GmmPrior, default_prior
from .io import load_model, load_pose_prior, save_model, save_pose_prior

__all__ = [
    "drodrigues", "rodrigues", "rodrigues_batch", "skew", "wrap_axis_angle",
    "BodyModel", "PoseParams", "ShapeParams", "blended_rotations", "body_part",
    "forward_kinematics", "parts_compatible", "pose_features", "pose_offsets",
    "posed_joints", "shaped_rest", "skin",
    "INFLATE_PER_UNIT", "JOINT_NAMES", "PARENTS", "SCALE_PER_UNIT",
    "MannequinSpec", "make_mannequin", "GmmPrior", "default_prior",
    "load_model", "load_pose_prior", "save_model", "save_pose_prior",
]
