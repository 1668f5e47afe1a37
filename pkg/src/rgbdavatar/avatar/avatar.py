"""Personalized reposable avatars.

An avatar couples the parametric body model with two layers recovered from a
fused reconstruction: a per-template-vertex displacement map lifting the
model surface onto the reconstruction, and the reconstruction itself bound
vertex-wise to the displaced template. Reposing skins the displaced template
to the new parameters and drags the detailed mesh along by deformation
transfer.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..body.model import (BodyModel, PoseParams, ShapeParams,
                          blended_rotations, forward_kinematics, shaped_rest,
                          skin)
from ..errors import DimensionMismatch
from ..fitting.fit import fit_single
from ..geometry.mesh import TriMesh, VertexIndex, compute_normals
from .arap import deform_with_pins


def local_frames(mesh):
    """Orthonormal frame per vertex: two tangents and the normal.

    The frame's columns are (t1, t2, n). t1 is the in-plane projection of a
    reference direction built from the vertex's incident edges, weighted by
    neighbour rank so the combination is fixed by the topology alone. Being
    a linear combination of edge vectors it rotates with the surface under
    rigid motion, and no single degenerate edge (vertices can coincide after
    displacement mapping) can zero it out. Isolated vertices (or the rare
    reference parallel to the normal) fall back to projecting a global axis.
    """
    if mesh.normals is None:
        mesh = compute_normals(mesh)
    n = mesh.normals
    v = mesh.vertices
    ref = np.zeros_like(v)
    if mesh.num_faces:
        f = mesh.faces
        src = np.concatenate([f[:, 0], f[:, 1], f[:, 2],
                              f[:, 1], f[:, 2], f[:, 0]])
        dst = np.concatenate([f[:, 1], f[:, 2], f[:, 0],
                              f[:, 0], f[:, 1], f[:, 2]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        fresh = np.ones(len(src), dtype=bool)
        fresh[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[fresh], dst[fresh]
        starts = np.zeros(len(v), dtype=np.int64)
        uniq, first = np.unique(src, return_index=True)
        starts[uniq] = first
        weight = 0.5 ** (np.arange(len(src)) - starts[src])
        np.add.at(ref, src, weight[:, None] * (v[dst] - v[src]))
    t1 = ref - n * np.einsum("ij,ij->i", ref, n)[:, None]
    norm = np.linalg.norm(t1, axis=1)
    weak = norm < 1e-12
    if weak.any():
        axis = np.argmin(np.abs(n[weak]), axis=1)
        e = np.zeros((weak.sum(), 3))
        e[np.arange(len(e)), axis] = 1.0
        t1[weak] = e - n[weak] * np.einsum("ij,ij->i", e, n[weak])[:, None]
        norm = np.linalg.norm(t1, axis=1)
    t1 /= np.maximum(norm, 1e-30)[:, None]
    t2 = np.cross(n, t1)
    return np.stack([t1, t2, n], axis=2)


@dataclass
class PersonalizedAvatar:
    """Body model plus displacement map and bound detail mesh.

    displacement : (V_template, 3) stored per-vertex offset coordinates. In
        ``local`` mode they live in each rest vertex's tangent frame and
        rotate with it; in ``world`` mode they are raw rest-space vectors.
    detail : the fused reconstruction the avatar reposes.
    bind_ids / bind_offsets : per-detail-vertex nearest displaced-template
        vertex and the offset in that vertex's local frame.
    """

    model: BodyModel
    beta: ShapeParams
    theta: PoseParams
    displacement: np.ndarray
    detail: TriMesh
    bind_ids: np.ndarray
    bind_offsets: np.ndarray
    mode: str = "local"
    converged: bool = True

    def __post_init__(self):
        if self.mode not in ("local", "world"):
            raise DimensionMismatch(f"unknown displacement mode {self.mode!r}")
        if len(self.displacement) != self.model.num_vertices:
            raise DimensionMismatch("one displacement per template vertex required")
        if len(self.bind_ids) != self.detail.num_vertices \
                or len(self.bind_offsets) != self.detail.num_vertices:
            raise DimensionMismatch("one binding per detail vertex required")
        if self.bind_ids.min(initial=0) < 0 \
                or self.bind_ids.max(initial=-1) >= self.model.num_vertices:
            raise DimensionMismatch("binding index out of range")


def _rest_offsets(avatar, beta):
    """Displacement map expressed in the rest configuration for ``beta``."""
    if avatar.mode == "world":
        return avatar.displacement
    rest_mesh, _ = shaped_rest(avatar.model, beta)
    frames = local_frames(rest_mesh)
    return np.einsum("vab,vb->va", frames, avatar.displacement)


def _blended(model, beta, theta):
    """Per-vertex blended skinning rotation at the given parameters."""
    _, rest_joints = shaped_rest(model, beta)
    rots, _ = forward_kinematics(rest_joints, theta, model.parents)
    return rots, blended_rotations(model, rots)


def personalize(fused, initial_beta, initial_theta, model, mode="local",
                refit=True, surface_samples=6000, max_outer=30, tol=1e-6):
    """Build a reposable avatar from a fused reconstruction.

    Refits shape and pose to the reconstruction with the surface term alone
    (no joint or pose regularisers), then records, per template vertex, the
    offset to its nearest reconstruction vertex. The offset is stored so
    that skinning the displaced rest template at the fitted parameters
    reproduces the recorded surface exactly; in ``local`` mode it
    additionally rides each vertex's tangent frame so it survives reposing.
    Finally every reconstruction vertex is bound to its nearest displaced
    template vertex for detail transfer.
    """
    if fused.num_vertices == 0:
        raise DimensionMismatch("fused model is empty")
    beta, theta = initial_beta, initial_theta
    converged = True
    if refit:
        res = fit_single(fused, None, model, alpha_r=0.0, alpha_j=0.0,
                         beta0=initial_beta, theta0=initial_theta,
                         max_outer=max_outer, tol=tol,
                         surface_samples=surface_samples)
        beta, theta, converged = res.beta, res.theta, res.converged

    posed = skin(model, beta, theta)
    idx, _ = VertexIndex(fused.vertices).query(posed.vertices)
    d_world = fused.vertices[idx] - posed.vertices

    # skinning moves a rest-space offset s to M s in world space, so the
    # stored offset must be M^-1 d for the fitted pose to round-trip exactly
    _, blended = _blended(model, beta, theta)
    d_rest = np.linalg.solve(blended, d_world[..., None])[..., 0]
    if mode == "local":
        rest_mesh, _ = shaped_rest(model, beta)
        frames = local_frames(rest_mesh)
        displacement = np.einsum("vba,vb->va", frames, d_rest)  # F^T d
    else:
        displacement = d_rest

    displaced = compute_normals(
        skin(model, beta, theta, extra_rest_offsets=d_rest))
    bind_ids, _ = VertexIndex(displaced.vertices).query(fused.vertices)
    bind_frames = local_frames(displaced)[bind_ids]
    gap = fused.vertices - displaced.vertices[bind_ids]
    bind_offsets = np.einsum("vba,vb->va", bind_frames, gap)    # F^T gap

    return PersonalizedAvatar(
        model=model, beta=beta, theta=theta, displacement=displacement,
        detail=fused.copy(), bind_ids=bind_ids, bind_offsets=bind_offsets,
        mode=mode, converged=converged)


def repose(avatar, beta=None, theta=None):
    """Skin the displaced template to new parameters.

    Returns the intermediate displaced-template mesh: the displacement map
    is carried into the new rest configuration, added to the rest vertices
    and skinned. Defaults reuse the fitted parameters.
    """
    beta = avatar.beta if beta is None else beta
    theta = avatar.theta if theta is None else theta
    if len(beta.coeffs) != avatar.model.num_shape:
        raise DimensionMismatch(
            f"expected {avatar.model.num_shape} shape coefficients")
    if len(theta.joint_rots) != avatar.model.num_joints:
        raise DimensionMismatch("pose has wrong joint count")
    offsets = _rest_offsets(avatar, beta)
    return compute_normals(
        skin(avatar.model, beta, theta, extra_rest_offsets=offsets))


def transfer_detail(avatar, intermediate, method="arap", pin_weight=1e2,
                    max_iter=10, tol=1e-6):
    """Carry the detailed reconstruction onto a reposed intermediate mesh.

    Every detail vertex has a pin target: its bound template vertex's new
    position plus the stored offset rotated into the vertex's new local
    frame. The detail mesh is deformed as-rigidly-as-possible toward those
    soft pins. The blend-skinning baseline (which needs the target
    parameters rather than a mesh) lives in ``skinning_repose``.
    """
    if intermediate.num_vertices != avatar.model.num_vertices:
        raise DimensionMismatch("intermediate mesh is not the template topology")
    if method != "arap":
        raise DimensionMismatch(f"unknown transfer method {method!r}")
    frames = local_frames(intermediate)[avatar.bind_ids]
    targets = intermediate.vertices[avatar.bind_ids] \
        + np.einsum("vab,vb->va", frames, avatar.bind_offsets)
    return deform_with_pins(avatar.detail, targets, pin_weight=pin_weight,
                            max_iter=max_iter, tol=tol)


def skinning_repose(avatar, beta=None, theta=None):
    """Baseline reposing: detail vertices follow blended joint transforms.

    Each detail vertex borrows the skinning weights of its bound template
    vertex and is moved by the blended rigid motion from the fitted pose to
    the new parameters, with no deformation solve.
    """
    model = avatar.model
    beta = avatar.beta if beta is None else beta
    theta = avatar.theta if theta is None else theta
    _, rest_joints0 = shaped_rest(model, avatar.beta)
    rots0, disps0 = forward_kinematics(rest_joints0, avatar.theta, model.parents)
    p0 = rest_joints0 + disps0
    _, rest_joints1 = shaped_rest(model, beta)
    rots1, disps1 = forward_kinematics(rest_joints1, theta, model.parents)
    p1 = rest_joints1 + disps1

    w = model.skin_weights[avatar.bind_ids]            # (D, J)
    v = avatar.detail.vertices
    out = np.zeros_like(v)
    for j in range(model.num_joints):
        wj = w[:, j]
        if not wj.any():
            continue
        # x -> R1 R0^T (x - p0_j) + p1_j
        rel = v - p0[j]
        moved = rel @ (rots1[j] @ rots0[j].T).T + p1[j]
        out += wj[:, None] * moved
    return compute_normals(avatar.detail.with_vertices(out))


def reshape(avatar, delta_beta, method="arap", pin_weight=1e2, max_iter=10,
            tol=1e-6):
    """Repose the avatar with adjusted shape coefficients.

    ``delta_beta`` is added to the fitted shape; the pose is kept. The
    intermediate displaced template is rebuilt and the detail mesh follows
    by the chosen transfer method.
    """
    delta = np.asarray(delta_beta, dtype=np.float64).reshape(-1)
    if len(delta) != avatar.model.num_shape:
        raise DimensionMismatch(
            f"expected {avatar.model.num_shape} shape offsets, got {len(delta)}")
    beta = ShapeParams(avatar.beta.coeffs + delta)
    if method == "skinning":
        return skinning_repose(avatar, beta=beta)
    intermediate = repose(avatar, beta=beta)
    return transfer_detail(avatar, intermediate, method=method,
                           pin_weight=pin_weight, max_iter=max_iter, tol=tol)


def save_avatar(path, avatar, model_file=""):
    """Write the avatar bundle (parameters, displacement map, bindings).

    ``model_file`` records where the body model container lives; the model
    itself is not duplicated into the bundle.
    """
    np.savez_compressed(
        Path(path),
        beta=avatar.beta.coeffs,
        joint_rots=avatar.theta.joint_rots,
        root_trans=avatar.theta.root_trans,
        displacement=avatar.displacement,
        detail_vertices=avatar.detail.vertices,
        detail_faces=avatar.detail.faces,
        bind_ids=avatar.bind_ids,
        bind_offsets=avatar.bind_offsets,
        mode=np.array(avatar.mode),
        converged=np.array(avatar.converged),
        model_file=np.array(str(model_file)))


def load_avatar(path, model):
    """Read an avatar bundle back; the body model is supplied by the caller."""
    with np.load(Path(path), allow_pickle=False) as data:
        detail = compute_normals(
            TriMesh(data["detail_vertices"], data["detail_faces"]))
        return PersonalizedAvatar(
            model=model,
            beta=ShapeParams(data["beta"]),
            theta=PoseParams(data["joint_rots"], data["root_trans"]),
            displacement=data["displacement"],
            detail=detail,
            bind_ids=data["bind_ids"],
            bind_offsets=data["bind_offsets"],
            mode=str(data["mode"]),
            converged=bool(data["converged"]))
