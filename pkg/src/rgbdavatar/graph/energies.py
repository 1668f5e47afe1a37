"""Deformation-graph energy terms with analytic gradients.

Parameters pack per node as [A row-major (9), t (3)], concatenated over
nodes: x has length 12 * l. Gradients are returned in the same packing and
are finite-difference checked by the test suite.
"""

import numpy as np

from ..errors import InvalidIndex


def pack_params(graph):
    l = graph.num_nodes
    x = np.empty(12 * l)
    x.reshape(l, 12)[:, :9] = graph.affines.reshape(l, 9)
    x.reshape(l, 12)[:, 9:] = graph.translations
    return x


def unpack_params(graph, x):
    l = graph.num_nodes
    xv = x.reshape(l, 12)
    graph.affines = np.ascontiguousarray(xv[:, :9]).reshape(l, 3, 3)
    graph.translations = np.ascontiguousarray(xv[:, 9:])


def e_rigid(graph):
    """Deviation of each node affine from a rotation: sum ||A A^T - I||_F^2.

    Returns (energy, gradient (12 l,)); translation entries are zero.
    """
    a = graph.affines
    l = len(a)
    m = np.einsum("nab,ncb->nac", a, a) - np.eye(3)
    energy = float((m * m).sum())
    grad_a = 4.0 * np.einsum("nab,nbc->nac", m, a)
    grad = np.zeros(12 * l)
    grad.reshape(l, 12)[:, :9] = grad_a.reshape(l, 9)
    return energy, grad


def e_smooth(graph):
    """Disagreement of neighbouring nodes on each other's positions.

    For every directed edge (i, j):  r = A_i (g_j - g_i) + g_i + t_i
    - (g_j + t_j). Returns (energy, gradient).
    """
    l = graph.num_nodes
    grad = np.zeros((l, 12))
    if not len(graph.edges):
        return 0.0, grad.reshape(-1)
    e_dir = np.concatenate([graph.edges, graph.edges[:, ::-1]], axis=0)
    i, j = e_dir[:, 0], e_dir[:, 1]
    g = graph.nodes
    d = g[j] - g[i]
    r = np.einsum("eab,eb->ea", graph.affines[i], d) \
        + g[i] + graph.translations[i] - g[j] - graph.translations[j]
    energy = float((r * r).sum())
    ga = 2.0 * np.einsum("ea,eb->eab", r, d)  # dE/dA_i
    np.add.at(grad[:, :9], i, ga.reshape(-1, 9))
    np.add.at(grad[:, 9:], i, 2.0 * r)
    np.add.at(grad[:, 9:], j, -2.0 * r)
    return energy, grad.reshape(-1)


def deform_points(graph, pos, bind_idx, bind_w):
    """Apply the graph to explicit points with explicit bindings.

    Written in displacement form so identity parameters reproduce the
    input positions bit for bit.
    """
    out = pos.copy()
    eye = np.eye(3)
    for k in range(bind_idx.shape[1]):
        i = bind_idx[:, k]
        corr = np.einsum("mab,mb->ma", graph.affines[i] - eye,
                         pos - graph.nodes[i]) + graph.translations[i]
        out += bind_w[:, k, None] * corr
    return out


def e_corr(graph, src_ids, targets, weights=None):
    """Weighted squared distance of deformed source vertices to targets.

    ``src_ids`` index the graph's bound vertex set; the bind-time positions
    are taken from ``graph_positions`` stored at binding time by the caller
    via ``bind_positions``. Returns (energy, gradient).
    """
    pos, bind_idx, bind_w = bind_positions(graph, src_ids)
    targets = np.asarray(targets, dtype=np.float64)
    m = len(pos)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    phi = deform_points(graph, pos, bind_idx, bind_w)
    r = phi - targets
    energy = float((w * (r * r).sum(axis=1)).sum())
    l = graph.num_nodes
    grad = np.zeros((l, 12))
    wr = 2.0 * w[:, None] * r
    for k in range(bind_idx.shape[1]):
        i = bind_idx[:, k]
        wk = bind_w[:, k]
        ga = np.einsum("ma,mb->mab", wr * wk[:, None], pos - graph.nodes[i])
        np.add.at(grad[:, :9], i, ga.reshape(-1, 9))
        np.add.at(grad[:, 9:], i, wr * wk[:, None])
    return energy, grad.reshape(-1)


def bind_positions(graph, src_ids):
    """Bind-time positions and bindings for a subset of bound vertices."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    if len(src_ids) and (src_ids.min() < 0 or src_ids.max() >= graph.num_bound):
        raise InvalidIndex("correspondence index outside the bound vertex set")
    if graph.bound_positions is None:
        raise InvalidIndex("graph carries no bind-time positions")
    pos = graph.bound_positions[src_ids]
    return pos, graph.bind_idx[src_ids], graph.bind_w[src_ids]
