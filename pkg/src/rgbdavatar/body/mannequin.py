"""Procedural articulated mannequin used by the synthetic test harness.

The body is the zero level set of a union-of-capsules signed distance field,
extracted with marching cubes, with smooth distance-based skinning weights,
a surface-based joint regressor and a two-direction shape basis (overall
scale and limb thickness). All construction is deterministic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from skimage.measure import marching_cubes

from ..errors import InvalidSpec
from ..geometry.mesh import (TriMesh, compute_normals, face_normals,
                             largest_component, weld_vertices)
from .model import BodyModel

#: metres of vertex motion per unit of the two shape coefficients
SCALE_PER_UNIT = 0.10      # coefficient 0: isotropic scale about the pelvis
INFLATE_PER_UNIT = 0.03    # coefficient 1: offset along the rest normal

JOINT_NAMES = [
    "pelvis", "spine", "chest", "neck", "head",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
]

PARENTS = np.array([-1, 0, 1, 2, 3, 0, 5, 6, 0, 8, 9, 2, 11, 12, 2, 14, 15])

# nominal T-pose joint centres (x right, y up, z forward), metres
_J = {
    "pelvis": (0.00, 0.95, 0.0),
    "spine": (0.00, 1.15, 0.0),
    "chest": (0.00, 1.32, 0.0),
    "neck": (0.00, 1.50, 0.0),
    "head": (0.00, 1.62, 0.0),
    "l_hip": (0.10, 0.92, 0.0),
    "l_knee": (0.11, 0.52, 0.0),
    "l_ankle": (0.11, 0.09, 0.0),
    "r_hip": (-0.10, 0.92, 0.0),
    "r_knee": (-0.11, 0.52, 0.0),
    "r_ankle": (-0.11, 0.09, 0.0),
    "l_shoulder": (0.19, 1.42, 0.0),
    "l_elbow": (0.46, 1.42, 0.0),
    "l_wrist": (0.70, 1.42, 0.0),
    "r_shoulder": (-0.19, 1.42, 0.0),
    "r_elbow": (-0.46, 1.42, 0.0),
    "r_wrist": (-0.70, 1.42, 0.0),
}

# capsules: (owning joint name, endpoint a, endpoint b, radius)
_CAPSULES = [
    ("pelvis", _J["pelvis"], _J["spine"], 0.140),
    ("spine", _J["spine"], _J["chest"], 0.125),
    ("chest", _J["chest"], _J["neck"], 0.110),
    ("chest", _J["chest"], _J["l_shoulder"], 0.070),
    ("chest", _J["chest"], _J["r_shoulder"], 0.070),
    ("neck", _J["neck"], (0.0, 1.56, 0.0), 0.050),
    ("head", _J["head"], (0.0, 1.68, 0.0), 0.090),
    ("l_hip", _J["l_hip"], _J["l_knee"], 0.072),
    ("l_knee", _J["l_knee"], _J["l_ankle"], 0.055),
    ("l_ankle", _J["l_ankle"], (0.11, 0.035, 0.13), 0.042),
    ("r_hip", _J["r_hip"], _J["r_knee"], 0.072),
    ("r_knee", _J["r_knee"], _J["r_ankle"], 0.055),
    ("r_ankle", _J["r_ankle"], (-0.11, 0.035, 0.13), 0.042),
    ("l_shoulder", _J["l_shoulder"], _J["l_elbow"], 0.050),
    ("l_elbow", _J["l_elbow"], _J["l_wrist"], 0.042),
    ("l_wrist", _J["l_wrist"], (0.78, 1.42, 0.0), 0.036),
    ("r_shoulder", _J["r_shoulder"], _J["r_elbow"], 0.050),
    ("r_elbow", _J["r_elbow"], _J["r_wrist"], 0.042),
    ("r_wrist", _J["r_wrist"], (-0.78, 1.42, 0.0), 0.036),
]


@dataclass
class MannequinSpec:
    """Tunable knobs of the procedural mannequin."""

    resolution: float = 0.015     # marching-cubes voxel edge, metres
    radius_scale: float = 1.0     # multiplies every capsule radius
    blend_sigma: float = 0.05     # skin-weight falloff distance, metres
    regressor_sigma: float = 0.08  # joint-regressor falloff, metres
    bind_joints: int = 4          # skin weights kept per vertex

    def validate(self):
        if self.resolution <= 0:
            raise InvalidSpec("resolution must be positive")
        if self.radius_scale <= 0:
            raise InvalidSpec("radius_scale must be positive")
        if self.blend_sigma <= 0 or self.regressor_sigma <= 0:
            raise InvalidSpec("falloff sigmas must be positive")
        if not (1 <= self.bind_joints <= len(PARENTS)):
            raise InvalidSpec("bind_joints out of range")


def _segment_distance(points, a, b):
    """Distance from each point to segment ab."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(points - proj, axis=-1)


def _capsule_sdf(points, spec):
    """Union-of-capsules signed distance (negative inside)."""
    best = None
    for _, a, b, r in _CAPSULES:
        d = _segment_distance(points, a, b) - r * spec.radius_scale
        best = d if best is None else np.minimum(best, d)
    return best


def _joint_surface_distance(points, spec):
    """(N, J) distance from each point to each joint's capsule surfaces."""
    j_count = len(JOINT_NAMES)
    out = np.full((len(points), j_count), np.inf)
    name_to_idx = {n: i for i, n in enumerate(JOINT_NAMES)}
    for owner, a, b, r in _CAPSULES:
        j = name_to_idx[owner]
        d = np.maximum(_segment_distance(points, a, b) - r * spec.radius_scale, 0.0)
        out[:, j] = np.minimum(out[:, j], d)
    return out


def _procedural_colors(verts):
    """Deterministic per-vertex RGB tied to rest position (checker + ramps)."""
    v = verts
    cell = np.floor(v / 0.06).sum(axis=1) % 2.0
    r = 0.25 + 0.5 * cell
    g = 0.2 + 0.6 * (v[:, 1] - v[:, 1].min()) / max(np.ptp(v[:, 1]), 1e-9)
    b = 0.5 + 0.4 * np.sin(25.0 * v[:, 0]) * np.sin(25.0 * v[:, 2])
    return np.clip(np.stack([r, g, b], axis=1), 0.0, 1.0)


def make_mannequin(spec=None):
    """Build the articulated mannequin as a BodyModel.

    The surface is watertight (single closed component), skin weights are
    smooth with at most ``bind_joints`` non-zeros per vertex, and the shape
    basis holds the scale and thickness directions.
    """
    spec = spec or MannequinSpec()
    spec.validate()
    h = spec.resolution
    pts_all = np.array([p for _, a, b, _ in _CAPSULES for p in (a, b)])
    r_max = max(r for _, _, _, r in _CAPSULES) * spec.radius_scale
    lo = pts_all.min(axis=0) - (r_max + 4 * h)
    hi = pts_all.max(axis=0) + (r_max + 4 * h)
    # shift the grid by an irrational fraction of a cell so the level set
    # never passes exactly through grid nodes (which would make marching
    # cubes emit duplicate vertices and zero-area faces)
    lo = lo - (np.sqrt(5.0) - 2.0) * h
    nx, ny, nz = [int(np.ceil((hi[k] - lo[k]) / h)) + 1 for k in range(3)]
    xs = lo[0] + np.arange(nx) * h
    ys = lo[1] + np.arange(ny) * h
    zs = lo[2] + np.arange(nz) * h
    grid = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1)
    sdf = _capsule_sdf(grid.reshape(-1, 3), spec).reshape(nx, ny, nz)
    if sdf.min() >= 0.0:
        raise InvalidSpec("capsule body is thinner than the grid resolution")
    verts, faces, _, _ = marching_cubes(sdf, level=0.0, spacing=(h, h, h))
    verts = verts + lo
    mesh = largest_component(
        weld_vertices(TriMesh(verts, faces.astype(np.int64))))

    # orient faces outward (agree with the SDF gradient)
    fn = face_normals(mesh)
    centers = mesh.vertices[mesh.faces].mean(axis=1)
    eps = 0.5 * h
    grad = np.stack([
        _capsule_sdf(centers + np.eye(3)[k] * eps, spec)
        - _capsule_sdf(centers - np.eye(3)[k] * eps, spec)
        for k in range(3)], axis=1)
    if (fn * grad).sum() < 0.0:
        mesh.faces = mesh.faces[:, [0, 2, 1]]
    mesh = compute_normals(mesh)
    mesh.colors = _procedural_colors(mesh.vertices)

    v = mesh.vertices
    j_count = len(JOINT_NAMES)

    # smooth skinning weights from capsule-surface distances
    d = _joint_surface_distance(v, spec)
    w = np.exp(-(d / spec.blend_sigma) ** 2)
    k = spec.bind_joints
    order = np.argsort(-w, axis=1, kind="stable")[:, :k]
    w_top = np.take_along_axis(w, order, axis=1)
    w_top /= w_top.sum(axis=1, keepdims=True)
    weights = np.zeros((len(v), j_count))
    np.put_along_axis(weights, order, w_top, axis=1)

    # joint regressor: gaussian average of nearby surface vertices
    nominal = np.array([_J[n] for n in JOINT_NAMES])
    rows, cols, vals = [], [], []
    for j in range(j_count):
        dist = np.linalg.norm(v - nominal[j], axis=1)
        g = np.exp(-(dist / spec.regressor_sigma) ** 2)
        keep = g > np.exp(-2.5 ** 2)
        if keep.sum() < 3:
            keep = dist <= np.partition(dist, 8)[8]
        g_keep = g[keep] / g[keep].sum()
        rows.extend([j] * int(keep.sum()))
        cols.extend(np.flatnonzero(keep))
        vals.extend(g_keep)
    regressor = sp.csr_matrix((vals, (rows, cols)), shape=(j_count, len(v)))

    # shape basis: scale about the regressed pelvis + inflate along normals
    pelvis = (regressor @ v)[0]
    basis = np.zeros((len(v), 3, 2))
    basis[:, :, 0] = SCALE_PER_UNIT * (v - pelvis)
    basis[:, :, 1] = INFLATE_PER_UNIT * mesh.normals
    pose_basis = np.zeros((len(v), 3, 0))

    return BodyModel(
        template=mesh,
        shape_basis=basis,
        pose_basis=pose_basis,
        joint_regressor=regressor,
        skin_weights=weights,
        parents=PARENTS.copy(),
        joint_names=list(JOINT_NAMES),
    )
