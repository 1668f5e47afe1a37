"""As-rigid-as-possible mesh deformation with soft position pins.

Local/global alternation: per-vertex rotations come from the SVD of the
covariance between rest and current one-ring edges; the global step solves
one sparse symmetric positive definite system whose factorization is reused
across iterations. A rigid pre-alignment of the pins seeds the solve, which
makes the whole transfer exactly equivariant under rigid motions of the
targets.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from ..errors import DimensionMismatch
from ..geometry.mesh import compute_normals


def _directed_edges(faces, num_vertices):
    """Unique undirected mesh edges, returned in both orientations."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    return np.concatenate([e, e[:, ::-1]], axis=0)


def _rigid_fit(src, dst):
    """Least-squares rigid transform (rotation, translation) src -> dst."""
    a_bar = src.mean(axis=0)
    b_bar = dst.mean(axis=0)
    h = (src - a_bar).T @ (dst - b_bar)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, b_bar - r @ a_bar


def _local_rotations(edges, rest_edge, cur_edge, num_vertices):
    """Best-fit rotation per vertex from its one-ring edge covariance."""
    cov = np.empty((num_vertices, 3, 3))
    src = edges[:, 0]
    for a in range(3):
        for b in range(3):
            cov[:, a, b] = np.bincount(
                src, weights=rest_edge[:, a] * cur_edge[:, b],
                minlength=num_vertices)
    u, _, vt = np.linalg.svd(cov)
    rot = np.einsum("vba,vcb->vac", vt, u)        # V @ U^T per vertex
    flip = np.linalg.det(rot) < 0.0
    if flip.any():
        vt_f = vt[flip].copy()
        vt_f[:, 2, :] *= -1.0
        rot[flip] = np.einsum("vba,vcb->vac", vt_f, u[flip])
    return rot


def deform_with_pins(mesh, targets, pin_ids=None, pin_weight=1e2,
                     max_iter=10, tol=1e-6):
    """Deform a mesh so pinned vertices approach targets, staying locally rigid.

    ``targets`` gives the desired position per pinned vertex; ``pin_ids``
    defaults to all vertices (then targets must be (V, 3)). The energy is

        sum_i sum_{j in N(i)} |(v'_i - v'_j) - R_i (v_i - v_j)|^2
        + pin_weight * sum_pins |v'_i - t_i|^2

    minimized by alternating the closed-form local rotations with the global
    sparse solve, for ``max_iter`` rounds or until the relative energy drop
    falls below ``tol``. Returns the deformed mesh with recomputed normals;
    connectivity is untouched.
    """
    v = mesh.vertices
    n = len(v)
    targets = np.asarray(targets, dtype=np.float64)
    if pin_ids is None:
        if targets.shape != (n, 3):
            raise DimensionMismatch(
                f"targets must be ({n}, 3) when all vertices are pinned")
        pin_ids = np.arange(n)
    else:
        pin_ids = np.asarray(pin_ids, dtype=np.int64)
        if targets.shape != (len(pin_ids), 3):
            raise DimensionMismatch("one target per pinned vertex required")
    if len(pin_ids) == 0:
        raise DimensionMismatch("at least one pin is required")

    edges = _directed_edges(mesh.faces, n)
    src, dst = edges[:, 0], edges[:, 1]
    rest_edge = v[src] - v[dst]
    deg = np.bincount(src, minlength=n).astype(np.float64)

    pin_diag = np.zeros(n)
    pin_diag[pin_ids] = pin_weight
    mat = coo_matrix(
        (np.concatenate([deg + pin_diag, -np.ones(len(src))]),
         (np.concatenate([np.arange(n), src]),
          np.concatenate([np.arange(n), dst]))),
        shape=(n, n)).tocsc()
    factor = splu(mat)

    pin_rhs = np.zeros((n, 3))
    pin_rhs[pin_ids] = pin_weight * targets

    # rigid seed: aligning the pins first makes the result exactly
    # equivariant under rigid motions of the targets
    r0, t0 = _rigid_fit(v[pin_ids], targets)
    cur = v @ r0.T + t0

    energy_prev = None
    for _ in range(max_iter):
        rot = _local_rotations(edges, rest_edge, cur[src] - cur[dst], n)
        # rhs_i = sum_j (R_i + R_j)/2 (v_i - v_j) + pins
        rot_edge = 0.5 * (np.einsum("eab,eb->ea", rot[src], rest_edge)
                          + np.einsum("eab,eb->ea", rot[dst], rest_edge))
        rhs = pin_rhs.copy()
        for c in range(3):
            rhs[:, c] += np.bincount(src, weights=rot_edge[:, c], minlength=n)
        cur = factor.solve(rhs)

        arap_res = (cur[src] - cur[dst]) \
            - np.einsum("eab,eb->ea", rot[src], rest_edge)
        energy = float((arap_res ** 2).sum()) + float(
            pin_weight * ((cur[pin_ids] - targets) ** 2).sum())
        if energy_prev is not None \
                and abs(energy_prev - energy) <= tol * max(energy_prev, 1e-300):
            break
        energy_prev = energy

    return compute_normals(mesh.with_vertices(cur))
