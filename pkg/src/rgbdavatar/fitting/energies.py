"""Template-fitting energy terms: surface, joints, pose prior.

Each term returns (energy, gradient) and optionally Gauss-Newton pieces;
gradients use the shared packing [beta, theta (by joint), root translation]
from :mod:`.skinjac` and are finite-difference checked by the tests.
"""

import numpy as np

from ..errors import DimensionMismatch
from ..geometry.mesh import VertexIndex
from .skinjac import SkinJacobian, SkinState


def nearest_pairs(scan_points, model_vertices):
    """Match each scan point to its nearest model vertex: (model_ids, dists)."""
    idx = VertexIndex(model_vertices)
    ids, d = idx.query(scan_points)
    return ids, d


def e_surface(scan_points, state, pairs=None, jac=None):
    """Squared distance from scan points to matched model vertices.

    ``pairs`` holds the matched model vertex id per scan point; when None the
    nearest model vertex is used (recomputed from the current state). Returns
    (energy, gradient, h_gn) with h_gn the Gauss-Newton Hessian estimate.
    """
    scan_points = np.asarray(scan_points, dtype=np.float64)
    verts = state.vertices()
    if pairs is None:
        pairs, _ = nearest_pairs(scan_points, verts)
    pairs = np.asarray(pairs, dtype=np.int64)
    res = verts[pairs] - scan_points  # d residual / d params = vertex jacobian
    energy = float((res * res).sum())

    uniq, inv = np.unique(pairs, return_inverse=True)
    r_sum = np.zeros((len(uniq), 3))
    np.add.at(r_sum, inv, res)
    counts = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    jac = jac if jac is not None else SkinJacobian(state)
    jv = jac.vertex_jacobian(uniq)  # (u, 3, P)
    grad = 2.0 * np.einsum("ua,uap->p", r_sum, jv)
    h_gn = 2.0 * np.einsum("uap,u,uaq->pq", jv, counts, jv)
    return energy, grad, h_gn


def gm_rho(x, sigma):
    """Geman-McClure robust penalty x^2 / (x^2 + sigma^2), bounded in [0, 1)."""
    s = x * x
    return s / (s + sigma * sigma)


def e_joints(obs_joints, obs_weights, state, sigma=0.2, jac=None):
    """Robustified joint-position energy.

    ``obs_joints`` (J, 3) are target positions in model joint order with
    per-joint confidences ``obs_weights`` (zero disables a joint). Returns
    (energy, gradient, h_gn).
    """
    obs_joints = np.asarray(obs_joints, dtype=np.float64)
    w = np.asarray(obs_weights, dtype=np.float64)
    if obs_joints.shape != (state.model.num_joints, 3):
        raise DimensionMismatch("joint observation count does not match model")
    res = state.joints - obs_joints  # (J, 3)
    s = (res * res).sum(axis=1)
    sig2 = sigma * sigma
    energy = float((w * s / (s + sig2)).sum())
    # d rho(|e|) / d e = 2 sigma^2 e / (s + sigma^2)^2
    irls = w * sig2 / (s + sig2) ** 2  # frozen IRLS weight per joint
    jac = jac if jac is not None else SkinJacobian(state)
    jq = jac.joint_jacobian()  # (J, 3, P)
    grad = 2.0 * np.einsum("j,ja,jap->p", irls, res, jq)
    h_gn = 2.0 * np.einsum("jap,j,jaq->pq", jq, irls, jq)
    return energy, grad, h_gn


def theta_prior_vector(prior, state_or_theta, num_shape, num_joints):
    """Map packed parameters onto the prior's pose vector and back.

    Returns (x_prior (D,), column indices into the packed layout).
    """
    theta = getattr(state_or_theta, "theta", state_or_theta)
    full = theta.joint_rots.reshape(-1)
    if prior.dim == 3 * (num_joints - 1):
        cols = num_shape + 3 + np.arange(3 * (num_joints - 1))
        return full[3:], cols
    if prior.dim == 3 * num_joints:
        cols = num_shape + np.arange(3 * num_joints)
        return full, cols
    raise DimensionMismatch(
        f"prior dimension {prior.dim} matches neither 3(J-1) nor 3J")


def e_prior(prior, state, num_params=None):
    """Pose-prior energy in the packed layout: (energy, gradient, h_gn)."""
    model = state.model
    p_total = num_params or (model.num_shape + 3 * model.num_joints + 3)
    x, cols = theta_prior_vector(prior, state, model.num_shape, model.num_joints)
    energy, g, h = prior.neg_log(x)
    grad = np.zeros(p_total)
    grad[cols] = g
    h_gn = np.zeros((p_total, p_total))
    h_gn[np.ix_(cols, cols)] = h
    return energy, grad, h_gn
