"""Parametric articulated body model: shape blending, kinematics, skinning.

The surface is a template deformed by linear shape/pose blend offsets, then
posed by linear blend skinning over a kinematic tree. Skinning is written in
displacement form,

    v' = p + sum_j w_vj [ (Rw_j - I)(p - c_j) + d_j ],

where Rw_j is joint j's world rotation, c_j its rest position and d_j its
world displacement (posed minus rest). At the rest pose every bracket is
exactly zero, so ``skin(beta, 0)`` returns the shaped rest vertices bit for
bit — downstream identity checks rely on this.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch, InvalidSpec
from ..geometry.mesh import TriMesh
from .rotations import rodrigues, wrap_axis_angle


@dataclass
class ShapeParams:
    """Shape coefficients (one per shape-basis direction)."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(self.coeffs, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.coeffs)):
            raise InvalidSpec("shape coefficients must be finite")

    @staticmethod
    def zeros(s):
        return ShapeParams(np.zeros(s))


@dataclass
class PoseParams:
    """Per-joint axis-angle rotations plus a root translation.

    Axis-angle norms are wrapped below pi on construction.
    """

    joint_rots: np.ndarray  # (J, 3)
    root_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        jr = np.ascontiguousarray(self.joint_rots, dtype=np.float64)
        if jr.ndim != 2 or jr.shape[1] != 3:
            raise DimensionMismatch(f"joint_rots must be (J, 3), got {jr.shape}")
        if not np.all(np.isfinite(jr)):
            raise InvalidSpec("joint rotations must be finite")
        self.joint_rots = wrap_axis_angle(jr)
        self.root_trans = np.ascontiguousarray(self.root_trans,
                                               dtype=np.float64).reshape(3)

    @staticmethod
    def rest(j):
        return PoseParams(np.zeros((j, 3)))

    @classmethod
    def unwrapped(cls, joint_rots, root_trans):
        """Construct without angle wrapping (used by optimizer iterates)."""
        obj = cls.__new__(cls)
        obj.joint_rots = np.ascontiguousarray(joint_rots, dtype=np.float64)
        obj.root_trans = np.ascontiguousarray(root_trans,
                                              dtype=np.float64).reshape(3)
        return obj

    def copy(self):
        return PoseParams(self.joint_rots.copy(), self.root_trans.copy())


@dataclass
class BodyModel:
    """Template mesh, blend bases, joint regressor, skinning weights, tree."""

    template: TriMesh
    shape_basis: np.ndarray       # (V, 3, S)
    pose_basis: np.ndarray        # (V, 3, 9*(J-1)) or zero-width (V, 3, 0)
    joint_regressor: sp.csr_matrix  # (J, V), rows sum to 1
    skin_weights: np.ndarray      # (V, J), rows sum to 1
    parents: np.ndarray           # (J,), parents[0] == -1
    joint_names: list | None = None
    part_labels: np.ndarray | None = None  # (V,), defaults to argmax weight

    def __post_init__(self):
        v_count = self.template.num_vertices
        self.shape_basis = np.ascontiguousarray(self.shape_basis, dtype=np.float64)
        self.pose_basis = np.ascontiguousarray(self.pose_basis, dtype=np.float64)
        self.skin_weights = np.ascontiguousarray(self.skin_weights, dtype=np.float64)
        self.parents = np.ascontiguousarray(self.parents, dtype=np.int64)
        if not sp.issparse(self.joint_regressor):
            self.joint_regressor = sp.csr_matrix(
                np.asarray(self.joint_regressor, dtype=np.float64))
        else:
            self.joint_regressor = self.joint_regressor.tocsr().astype(np.float64)
        j = len(self.parents)
        if self.shape_basis.shape[:2] != (v_count, 3):
            raise DimensionMismatch("shape basis does not match template")
        q = self.pose_basis.shape[2] if self.pose_basis.ndim == 3 else -1
        if self.pose_basis.shape[:2] != (v_count, 3) or q not in (0, 9 * (j - 1)):
            raise DimensionMismatch(
                "pose basis must be (V, 3, 0) or (V, 3, 9*(J-1))")
        if self.joint_regressor.shape != (j, v_count):
            raise DimensionMismatch("joint regressor must be (J, V)")
        if self.skin_weights.shape != (v_count, j):
            raise DimensionMismatch("skin weights must be (V, J)")
        if self.parents[0] != -1:
            raise InvalidSpec("joint 0 must be the root (parent -1)")
        # the tree must reach every joint from the root without cycles
        seen = np.zeros(j, dtype=bool)
        seen[0] = True
        for _ in range(j):
            grew = False
            for k in range(1, j):
                if not seen[k] and 0 <= self.parents[k] < j and seen[self.parents[k]]:
                    seen[k] = True
                    grew = True
            if not grew:
                break
        if not seen.all():
            raise InvalidSpec("kinematic tree is not rooted at joint 0")
        reg_rows = np.asarray(self.joint_regressor.sum(axis=1)).reshape(-1)
        if not np.allclose(reg_rows, 1.0, atol=1e-8):
            raise InvalidSpec("joint regressor rows must sum to 1")
        if not np.allclose(self.skin_weights.sum(axis=1), 1.0, atol=1e-8):
            raise InvalidSpec("skin weight rows must sum to 1")
        if (self.skin_weights < -1e-12).any():
            raise InvalidSpec("skin weights must be non-negative")
        if self.part_labels is None:
            self.part_labels = np.asarray(self.skin_weights.argmax(axis=1),
                                          dtype=np.int64)
        # cached top-K bindings for the skinning loops
        k = min(4, j)
        order = np.argsort(-self.skin_weights, axis=1, kind="stable")[:, :k]
        w = np.take_along_axis(self.skin_weights, order, axis=1)
        self._bind_idx = order
        self._bind_w = w

    @property
    def num_joints(self):
        return len(self.parents)

    @property
    def num_shape(self):
        return self.shape_basis.shape[2]

    @property
    def num_vertices(self):
        return self.template.num_vertices

    def children(self):
        ch = [[] for _ in range(self.num_joints)]
        for j in range(1, self.num_joints):
            ch[self.parents[j]].append(j)
        return ch


def _shaped_vertices(model, beta):
    """Template plus shape-basis offsets (shared by shaped_rest and skin)."""
    c = beta.coeffs
    if len(c) != model.num_shape:
        raise DimensionMismatch(
            f"expected {model.num_shape} shape coefficients, got {len(c)}")
    v = model.template.vertices
    if len(c) == 0 or not c.any():
        return v.copy()
    return v + model.shape_basis @ c


def shaped_rest(model, beta):
    """Shaped rest mesh and its regressed joint positions."""
    verts = _shaped_vertices(model, beta)
    joints = model.joint_regressor @ verts
    mesh = model.template.copy()
    mesh.vertices = verts
    return mesh, joints


def pose_features(theta):
    """Pose-blend feature vector: vec(R(theta_j) - I) for non-root joints."""
    jr = theta.joint_rots
    feats = np.empty((len(jr) - 1, 9))
    for j in range(1, len(jr)):
        feats[j - 1] = (rodrigues(jr[j]) - np.eye(3)).reshape(-1)
    return feats.reshape(-1)


def pose_offsets(model, theta):
    """Pose-dependent blend offsets (V, 3); zero whenever theta is rest."""
    if model.pose_basis.shape[2] == 0:
        return np.zeros((model.num_vertices, 3))
    jr = theta.joint_rots
    if len(jr) != model.num_joints:
        raise DimensionMismatch("pose has wrong joint count")
    feats = pose_features(theta)
    if not feats.any():
        return np.zeros((model.num_vertices, 3))
    return model.pose_basis @ feats


def forward_kinematics(rest_joints, theta, parents):
    """World rotations and displacements for every joint.

    Returns ``(rots, disps)`` with rots (J, 3, 3) and disps (J, 3); the posed
    joint positions are ``rest_joints + disps``. The root rotates about its
    own rest position and carries the root translation, so at the rest pose
    every displacement is exactly zero.
    """
    rest_joints = np.asarray(rest_joints, dtype=np.float64)
    j_count = len(parents)
    if len(theta.joint_rots) != j_count:
        raise DimensionMismatch("pose has wrong joint count")
    rots = np.empty((j_count, 3, 3))
    disps = np.empty((j_count, 3))
    rots[0] = rodrigues(theta.joint_rots[0])
    disps[0] = theta.root_trans
    for j in range(1, j_count):
        p = parents[j]
        rots[j] = rots[p] @ rodrigues(theta.joint_rots[j])
        disps[j] = disps[p] + (rots[p] - np.eye(3)) @ (rest_joints[j] - rest_joints[p])
    return rots, disps


def posed_joints(model, beta, theta):
    """Posed joint positions (J, 3)."""
    _, rest_joints = shaped_rest(model, beta)
    _, disps = forward_kinematics(rest_joints, theta, model.parents)
    return rest_joints + disps


def skin(model, beta, theta, extra_rest_offsets=None):
    """Pose the model surface by linear blend skinning.

    ``extra_rest_offsets`` (V, 3), when given, is added to the rest vertices
    before skinning (personalised detail displacements). With the rest pose
    and no offsets the output vertices equal ``shaped_rest`` bit for bit.
    """
    shaped = _shaped_vertices(model, beta)
    p = shaped
    po = pose_offsets(model, theta)
    if po.any():
        p = p + po
    if extra_rest_offsets is not None:
        p = p + extra_rest_offsets
    rest_joints = model.joint_regressor @ shaped
    rots, disps = forward_kinematics(rest_joints, theta, model.parents)
    verts = p.copy()
    bind_idx, bind_w = model._bind_idx, model._bind_w
    eye = np.eye(3)
    for k in range(bind_idx.shape[1]):
        j = bind_idx[:, k]
        w = bind_w[:, k]
        rel = p - rest_joints[j]
        corr = np.einsum("vab,vb->va", rots[j] - eye, rel) + disps[j]
        verts += w[:, None] * corr
    mesh = model.template.copy()
    mesh.vertices = verts
    return mesh


def blended_rotations(model, rots):
    """Per-vertex blended world rotation  M_v = sum_j w_vj Rw_j  (V, 3, 3).

    LBS is linear in rest positions, so a rest-space offset s at vertex v
    moves the skinned vertex by exactly ``M_v @ s``.
    """
    bind_idx, bind_w = model._bind_idx, model._bind_w
    out = np.zeros((model.num_vertices, 3, 3))
    for k in range(bind_idx.shape[1]):
        out += bind_w[:, k, None, None] * rots[bind_idx[:, k]]
    return out


def body_part(model, vertex_index):
    """Body-part label of a vertex (joint with the largest skin weight)."""
    if vertex_index < 0 or vertex_index >= model.num_vertices:
        raise DimensionMismatch("vertex index out of range")
    return int(model.part_labels[vertex_index])


def parts_compatible(model, part_a, part_b):
    """True when two part labels are the same joint or parent/child."""
    if part_a == part_b:
        return True
    return (model.parents[part_a] == part_b) or (model.parents[part_b] == part_a)
