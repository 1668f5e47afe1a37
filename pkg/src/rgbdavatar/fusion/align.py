"""Global multi-piece alignment into a canonical frame.

Every scan carries its own deformation graph; cross-scan correspondences
couple the graphs pairwise while the reference scan is pinned in place by
high-weight fixed-target rows. One joint Gauss-Newton solve moves all
pieces into the reference (canonical) frame at once.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import DisconnectedPieces
from ..geometry.mesh import TriMesh
from ..graph.build import build_graph, deform
from ..graph.solver import corr_block, solve_graphs


@dataclass
class CanonicalModel:
    """Result of canonical-frame alignment, later extended with the fused mesh."""

    graphs: list
    reference: int
    mesh: TriMesh | None = None

    def aligned_vertices(self, index):
        """Vertices of scan ``index`` mapped into the canonical frame."""
        return deform(self.graphs[index])


def _check_connected(num_scans, edges, reference):
    root = list(range(num_scans))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for i, j in edges:
        root[find(i)] = find(j)
    ref = find(reference)
    unreached = [i for i in range(num_scans) if find(i) != ref]
    if unreached:
        raise DisconnectedPieces(unreached)


def global_align(scans, corr_sets, reference, graphs=None, node_count=500,
                 bind_k=4, edge_k=6, alpha_reg=0.2, alpha_smooth=0.5,
                 alpha_corr=1.0, anchor_weight=1e3, max_iter=100, tol=1e-6):
    """Jointly deform all scans so cross-scan correspondences close.

    ``corr_sets`` maps scan-index pairs (i, j) to CorrespondenceSets whose
    indices refer to the scans' vertices. The pair structure must connect
    every scan to ``reference`` (DisconnectedPieces otherwise). Reference
    vertices are anchored by fixed self-targets of weight ``anchor_weight``.
    Returns (CanonicalModel, SolveInfo).
    """
    n = len(scans)
    edges = [(i, j) for (i, j) in corr_sets if len(corr_sets[(i, j)])]
    _check_connected(n, edges, reference)

    if graphs is None:
        graphs = [build_graph(s, node_count=node_count, bind_k=bind_k,
                              edge_k=edge_k) for s in scans]

    blocks = []
    for (i, j), cs in corr_sets.items():
        if len(cs) == 0:
            continue
        blocks.append(corr_block(graphs, i, cs.src_idx, dst=j,
                                 dst_ids=cs.dst_idx, weights=cs.weights))
    anchor_ids = np.arange(graphs[reference].num_bound)
    blocks.append(corr_block(
        graphs, reference, anchor_ids,
        targets=graphs[reference].bound_positions,
        weights=np.full(len(anchor_ids), anchor_weight)))

    info = solve_graphs(graphs, blocks, alpha_reg=alpha_reg,
                        alpha_smooth=alpha_smooth, alpha_corr=alpha_corr,
                        max_iter=max_iter, tol=tol)
    return CanonicalModel(graphs=graphs, reference=reference), info


def sparse_align(scans, corr_maps, ref_templates, reference, graphs=None,
                 node_count=500, bind_k=4, edge_k=6, alpha_reg=0.2,
                 alpha_smooth=0.5, alpha_corr=1.0, max_iter=100, tol=1e-6):
    """Canonical alignment for very sparse captures without scan overlap.

    Each scan is deformed toward its own fitted template posed at the
    reference pose: ``corr_maps[k]`` gives the template vertex id per scan
    vertex (-1 where unmatched) and ``ref_templates[k]`` the template mesh
    re-posed to the reference frame. Returns (CanonicalModel, [SolveInfo]).
    """
    n = len(scans)
    if graphs is None:
        graphs = [build_graph(s, node_count=node_count, bind_k=bind_k,
                              edge_k=edge_k) for s in scans]
    infos = []
    for k in range(n):
        cmap = np.asarray(corr_maps[k], dtype=np.int64)
        src = np.nonzero(cmap >= 0)[0]
        tmpl = ref_templates[k]
        tv = tmpl.vertices if isinstance(tmpl, TriMesh) else np.asarray(tmpl)
        targets = tv[cmap[src]]
        block = corr_block([graphs[k]], 0, src, targets=targets)
        infos.append(solve_graphs(
            [graphs[k]], [block], alpha_reg=alpha_reg,
            alpha_smooth=alpha_smooth, alpha_corr=alpha_corr,
            max_iter=max_iter, tol=tol))
    return CanonicalModel(graphs=graphs, reference=reference), infos


def correspondence_residuals(model, corr_sets):
    """Per-pair residual norms of cross-scan correspondences after alignment."""
    cache = {}

    def aligned(k):
        if k not in cache:
            cache[k] = model.aligned_vertices(k)
        return cache[k]

    out = {}
    for (i, j), cs in corr_sets.items():
        if len(cs) == 0:
            out[(i, j)] = np.zeros(0)
            continue
        out[(i, j)] = np.linalg.norm(
            aligned(i)[cs.src_idx] - aligned(j)[cs.dst_idx], axis=1)
    return out
