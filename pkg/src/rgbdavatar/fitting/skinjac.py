"""Analytic derivatives of the skinned surface w.r.t. shape and pose.

Parameters pack as ``x = [beta (S), theta (3 J, row-major by joint), root
translation (3)]``; every energy gradient in the fitting module uses this
layout. Derivatives propagate through the kinematic recursions: for each
scalar parameter we carry d(world rotation)/dp and d(world displacement)/dp
down the tree, then assemble per-vertex Jacobians of the displacement-form
skinning map.
"""

import numpy as np

from ..body.model import (_shaped_vertices, forward_kinematics, pose_offsets,
                          pose_features)
from ..body.rotations import drodrigues, rodrigues


def pack_params(beta, theta):
    return np.concatenate([
        beta.coeffs, theta.joint_rots.reshape(-1), theta.root_trans])


def unpack_params(x, num_shape, num_joints):
    from ..body.model import PoseParams, ShapeParams
    s = num_shape
    beta = ShapeParams(x[:s])
    jr = x[s:s + 3 * num_joints].reshape(num_joints, 3)
    theta = PoseParams.unwrapped(jr, x[s + 3 * num_joints:])
    return beta, theta


class SkinState:
    """Caches every pose-dependent quantity for one (model, beta, theta)."""

    def __init__(self, model, beta, theta):
        self.model = model
        self.beta = beta
        self.theta = theta
        self.shaped = _shaped_vertices(model, beta)
        self.pose_off = pose_offsets(model, theta)
        self.rest_positions = self.shaped + self.pose_off \
            if self.pose_off.any() else self.shaped
        self.rest_joints = np.asarray(model.joint_regressor @ self.shaped)
        j = model.num_joints
        self.r_local = np.empty((j, 3, 3))
        for k in range(j):
            self.r_local[k] = rodrigues(theta.joint_rots[k])
        self.r_world, self.disps = forward_kinematics(
            self.rest_joints, theta, model.parents)
        self.joints = self.rest_joints + self.disps

    def vertices(self, ids=None):
        """Skinned vertex positions (subset or all)."""
        model = self.model
        p = self.rest_positions if ids is None else self.rest_positions[ids]
        idx = model._bind_idx if ids is None else model._bind_idx[ids]
        wgt = model._bind_w if ids is None else model._bind_w[ids]
        out = p.copy()
        eye = np.eye(3)
        for k in range(idx.shape[1]):
            jj = idx[:, k]
            corr = np.einsum("vab,vb->va", self.r_world[jj] - eye,
                             p - self.rest_joints[jj]) + self.disps[jj]
            out += wgt[:, k, None] * corr
        return out


def _topo_order(parents):
    order = [0]
    remaining = set(range(1, len(parents)))
    while remaining:
        progress = [j for j in remaining if parents[j] not in remaining]
        order.extend(sorted(progress))
        remaining -= set(progress)
    return order


class SkinJacobian:
    """Per-parameter derivative packs for one SkinState."""

    def __init__(self, state):
        self.state = state
        model = state.model
        s = model.num_shape
        j = model.num_joints
        p_total = s + 3 * j + 3
        self.num_params = p_total
        self.slice_beta = slice(0, s)
        self.slice_theta = slice(s, s + 3 * j)
        self.slice_trans = slice(s + 3 * j, p_total)
        parents = model.parents
        order = _topo_order(parents)
        eye = np.eye(3)

        d_rw = np.zeros((p_total, j, 3, 3))
        d_d = np.zeros((p_total, j, 3))
        d_rest = np.zeros((p_total, j, 3))
        rj = state.rest_joints

        # shape parameters: rest joints move, rotations do not
        for si in range(s):
            dr = np.asarray(model.joint_regressor @ model.shape_basis[:, :, si])
            d_rest[si] = dr
            for jj in order:
                if jj == 0:
                    continue
                par = parents[jj]
                d_d[si, jj] = d_d[si, par] + (state.r_world[par] - eye) @ (
                    dr[jj] - dr[par])

        # joint rotations: propagate through the world-rotation recursion
        self.d_rl = np.zeros((j, 3, 3, 3))
        for k in range(j):
            self.d_rl[k] = drodrigues(state.theta.joint_rots[k])
        for k in range(j):
            for a in range(3):
                p_idx = s + 3 * k + a
                for jj in order:
                    par = parents[jj]
                    if jj == k:
                        base = eye if jj == 0 else state.r_world[par]
                        d_rw[p_idx, jj] = base @ self.d_rl[k, a]
                    elif jj != 0:
                        d_rw[p_idx, jj] = d_rw[p_idx, par] @ state.r_local[jj]
                        d_d[p_idx, jj] = d_d[p_idx, par] \
                            + d_rw[p_idx, par] @ (rj[jj] - rj[par])

        # root translation: every joint displaces one-to-one
        for a in range(3):
            d_d[s + 3 * j + a, :, a] = 1.0

        self.d_rw = d_rw
        self.d_d = d_d
        self.d_rest = d_rest

    def joint_jacobian(self):
        """d(posed joints)/d(params): (J, 3, P)."""
        return np.transpose(self.d_rest + self.d_d, (1, 2, 0))

    def _d_rest_positions(self, ids):
        """d(rest-space vertex positions)/d(params): (n, 3, P)."""
        st = self.state
        model = st.model
        n = len(ids)
        dp = np.zeros((n, 3, self.num_params))
        s = model.num_shape
        if s:
            dp[:, :, :s] = model.shape_basis[ids]
        q = model.pose_basis.shape[2]
        if q:
            basis = model.pose_basis[ids]  # (n, 3, 9*(J-1))
            for k in range(1, model.num_joints):
                seg = basis[:, :, 9 * (k - 1):9 * k]
                for a in range(3):
                    vec = self.d_rl[k, a].reshape(9)
                    dp[:, :, s + 3 * k + a] += seg @ vec
        return dp

    def vertex_jacobian(self, ids):
        """d(skinned vertices)/d(params) for the given vertex ids: (n, 3, P)."""
        st = self.state
        model = st.model
        ids = np.asarray(ids, dtype=np.int64)
        p = st.rest_positions[ids]
        dp = self._d_rest_positions(ids)
        out = dp.copy()
        eye = np.eye(3)
        bind_idx = model._bind_idx[ids]
        bind_w = model._bind_w[ids]
        for k in range(bind_idx.shape[1]):
            jj = bind_idx[:, k]
            w = bind_w[:, k]
            rel = p - st.rest_joints[jj]
            # d(Rw)(p - c) term: (P, n, 3, 3) gathered per vertex
            t1 = np.einsum("pnab,nb->nap", self.d_rw[:, jj], rel)
            # (Rw - I)(dp - d c) term
            d_rel = dp - np.transpose(self.d_rest[:, jj], (1, 2, 0))
            t2 = np.einsum("nab,nbp->nap", st.r_world[jj] - eye, d_rel)
            # d(displacement) term
            t3 = np.transpose(self.d_d[:, jj], (1, 2, 0))
            out += w[:, None, None] * (t1 + t2 + t3)
        return out
