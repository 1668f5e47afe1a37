from .skinjac import SkinJacobian, SkinState, pack_params, unpack_params
from .energies import (e_joints, e_prior, e_surface, gm_rho, nearest_pairs,
                       theta_prior_vector)
from .fit import (FitResult, JointObservation, bundle_adjust, fit_single,
                  frontal_frame, initialize_pose, lift_joints,
                  refine_scan_to_template)

__all__ = [
    "SkinJacobian", "SkinState", "pack_params", "unpack_params",
    "e_joints", "e_prior", "e_surface", "gm_rho", "nearest_pairs",
    "theta_prior_vector",
    "FitResult", "JointObservation", "bundle_adjust", "fit_single",
    "frontal_frame", "initialize_pose", "lift_joints",
    "refine_scan_to_template",
]
