"""Embedded deformation graph construction.

Nodes are sampled uniformly over the mesh by farthest-point sampling; each
vertex is bound to its nearest nodes with distance-falloff weights. The
topology-aware variant restricts connectivity to compatible body parts so
that touching-but-distinct limbs deform independently.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import TooFewVertices
from ..geometry.mesh import TriMesh


@dataclass
class DeformGraph:
    """Per-node affine deformations bound to a source mesh.

    A vertex v maps to ``sum_k w_k [A_k (v - g_k) + g_k + t_k]`` over its
    bound nodes (positions g, affines A, translations t).
    """

    nodes: np.ndarray          # (l, 3) node rest positions
    edges: np.ndarray          # (E, 2) undirected unique pairs, lo < hi
    affines: np.ndarray        # (l, 3, 3), identity at rest
    translations: np.ndarray   # (l, 3), zero at rest
    bind_idx: np.ndarray       # (V, K) node indices per vertex
    bind_w: np.ndarray         # (V, K) convex weights per vertex
    bound_positions: np.ndarray | None = None  # (V, 3) bind-time positions
    node_parts: np.ndarray | None = None  # (l,) body-part labels
    node_vertex: np.ndarray | None = None  # (l,) source vertex of each node

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_bound(self):
        return len(self.bind_idx)

    def copy(self):
        return DeformGraph(
            self.nodes.copy(), self.edges.copy(), self.affines.copy(),
            self.translations.copy(), self.bind_idx.copy(), self.bind_w.copy(),
            None if self.bound_positions is None else self.bound_positions.copy(),
            None if self.node_parts is None else self.node_parts.copy(),
            None if self.node_vertex is None else self.node_vertex.copy(),
        )

    def set_rigid(self, rotation, translation):
        """Set every node to the same rigid motion about the origin.

        Node i maps x to R x + t, i.e. A_i = R and
        t_i = R g_i + t - g_i.
        """
        rotation = np.asarray(rotation, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64)
        self.affines[:] = rotation
        self.translations[:] = self.nodes @ rotation.T + translation - self.nodes


def farthest_point_sample(points, count, start=0):
    """Deterministic farthest-point sampling; returns ``count`` indices."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start
    dist = np.linalg.norm(points - points[start], axis=1)
    for k in range(1, count):
        idx = int(dist.argmax())
        chosen[k] = idx
        np.minimum(dist, np.linalg.norm(points - points[idx], axis=1), out=dist)
    return chosen


def _binding_weights(d):
    """Falloff weights (1 - d/d_max)^2 from (V, K+1) sorted distances."""
    d_max = d[:, -1]
    core = d[:, :-1]
    safe = np.maximum(d_max, 1e-300)
    w = (1.0 - core / safe[:, None]) ** 2
    w[d_max == 0.0] = 1.0  # all candidate nodes coincide with the vertex
    s = w.sum(axis=1)
    flat = s <= 0.0
    if flat.any():
        w[flat] = 1.0
        s = w.sum(axis=1)
    return w / s[:, None]


def build_graph(mesh, node_count=500, bind_k=4, edge_k=6):
    """Plain deformation graph over all mesh vertices."""
    verts = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh)
    v_count = len(verts)
    if v_count < node_count:
        raise TooFewVertices(
            f"mesh has {v_count} vertices for {node_count} nodes")
    node_ids = farthest_point_sample(verts, node_count)
    nodes = verts[node_ids]
    tree = cKDTree(nodes)

    k_edge = min(edge_k + 1, node_count)
    _, nb = tree.query(nodes, k=k_edge)
    nb = np.atleast_2d(nb)
    pairs = []
    for i in range(node_count):
        for j in nb[i]:
            if j != i:
                pairs.append((min(i, j), max(i, j)))
    edges = np.unique(np.asarray(pairs, dtype=np.int64), axis=0) \
        if pairs else np.zeros((0, 2), np.int64)

    k_bind = min(bind_k + 1, node_count)
    d, idx = tree.query(verts, k=k_bind)
    d = np.atleast_2d(d)
    idx = np.atleast_2d(idx)
    if k_bind <= bind_k:
        # not enough nodes for a (K+1)-th distance: reuse the farthest found
        d = np.concatenate([d, d[:, -1:]], axis=1)
        idx = np.concatenate([idx, idx[:, -1:]], axis=1)
    w = _binding_weights(d)
    labels = mesh.labels if isinstance(mesh, TriMesh) else None
    return DeformGraph(
        nodes=nodes,
        edges=edges,
        affines=np.tile(np.eye(3), (node_count, 1, 1)),
        translations=np.zeros((node_count, 3)),
        bind_idx=idx[:, :w.shape[1]].astype(np.int64),
        bind_w=w,
        bound_positions=verts.copy(),
        node_parts=None if labels is None else labels[node_ids].copy(),
        node_vertex=node_ids,
    )


def compatible_parts(parents, part_a, part_b):
    """Same part or parent/child in the kinematic tree."""
    if part_a == part_b:
        return True
    parents = np.asarray(parents)
    return parents[part_a] == part_b or parents[part_b] == part_a


def _compat_matrix(parents):
    j = len(parents)
    mat = np.eye(j, dtype=bool)
    for a in range(j):
        p = parents[a]
        if p >= 0:
            mat[a, p] = mat[p, a] = True
    return mat


def cut_incompatible_faces(mesh, parents):
    """Remove faces whose corners span incompatible body parts.

    Requires per-vertex part labels on the mesh; returns (cut mesh, number
    of removed faces). Separates limbs that merely touch in space.
    """
    if mesh.labels is None:
        raise TooFewVertices("mesh has no part labels to cut by")
    compat = _compat_matrix(parents)
    lab = np.asarray(mesh.labels, dtype=np.int64)
    f = mesh.faces
    l0, l1, l2 = lab[f[:, 0]], lab[f[:, 1]], lab[f[:, 2]]
    ok = compat[l0, l1] & compat[l1, l2] & compat[l2, l0]
    out = mesh.copy()
    out.faces = f[ok]
    return out, int((~ok).sum())


def build_graph_topology(mesh, parents, node_count=500, bind_k=4, edge_k=6):
    """Topology-aware graph: faces cut first, connectivity kept compatible.

    Node-node edges and vertex-node bindings only join compatible parts.
    Vertices whose part sees fewer than bind_k + 1 compatible nodes fall
    back to plain nearest-node binding.
    """
    cut, _ = cut_incompatible_faces(mesh, parents)
    graph = build_graph(cut, node_count=node_count, bind_k=bind_k, edge_k=edge_k)
    lab = np.asarray(mesh.labels, dtype=np.int64)
    node_parts = lab[graph.node_vertex]
    graph.node_parts = node_parts
    compat = _compat_matrix(parents)

    # restrict node-node edges to compatible parts
    e = graph.edges
    keep = compat[node_parts[e[:, 0]], node_parts[e[:, 1]]]
    graph.edges = e[keep]

    # rebuild bindings per part over that part's compatible nodes
    verts = mesh.vertices
    k_full = bind_k + 1
    for part in np.unique(lab):
        vmask = lab == part
        nmask = compat[node_parts, part]
        n_avail = int(nmask.sum())
        if n_avail < k_full:
            continue  # too few compatible nodes: keep the plain binding
        sub_nodes = np.flatnonzero(nmask)
        tree = cKDTree(graph.nodes[sub_nodes])
        d, idx = tree.query(verts[vmask], k=k_full)
        d = np.atleast_2d(d)
        idx = np.atleast_2d(idx)
        w = _binding_weights(d)
        graph.bind_idx[vmask] = sub_nodes[idx[:, :w.shape[1]]]
        graph.bind_w[vmask] = w
    return graph


def deform(graph, verts=None):
    """Apply the graph's current deformation to bound vertex positions.

    ``verts`` defaults to the graph's stored bind-time positions; it may
    also be a (V, 3) array or TriMesh with the bind-time vertex count.
    """
    if verts is None:
        verts = graph.bound_positions
    mesh = verts if isinstance(verts, TriMesh) else None
    p = mesh.vertices if mesh is not None else np.asarray(verts, dtype=np.float64)
    # displacement form: exactly the identity map at rest parameters
    out = p.copy()
    eye = np.eye(3)
    for k in range(graph.bind_idx.shape[1]):
        i = graph.bind_idx[:, k]
        w = graph.bind_w[:, k]
        corr = np.einsum("vab,vb->va", graph.affines[i] - eye, p - graph.nodes[i]) \
            + graph.translations[i]
        out += w[:, None] * corr
    if mesh is not None:
        res = mesh.with_vertices(out)
        return res
    return out
