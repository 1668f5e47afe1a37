"""Sparse damped Gauss-Newton solver for one or many deformation graphs.

All graph optimisation in the package (pairwise alignment, scan refinement,
global canonical alignment) goes through :func:`solve_graphs`. Residual rows
are scaled by the square roots of their term weights, so the reported energy
is exactly the weighted objective; steps are accepted only when the true
energy decreases, which makes the recorded histories monotone.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import InvalidIndex, SingularSystem
from ..geometry.mesh import TriMesh
from .build import build_graph
from .energies import pack_params, unpack_params


@dataclass
class CorrBlock:
    """One set of correspondence residuals.

    Sources are vertices bound to graph ``src``; targets are either fixed
    points (``dst is None``) or vertices bound to graph ``dst``, in which
    case the residual couples both graphs:  phi_src(p) - phi_dst(q).
    """

    src: int
    src_pos: np.ndarray
    src_bind_idx: np.ndarray
    src_bind_w: np.ndarray
    weights: np.ndarray
    targets: np.ndarray | None = None
    dst: int | None = None
    dst_pos: np.ndarray | None = None
    dst_bind_idx: np.ndarray | None = None
    dst_bind_w: np.ndarray | None = None

    def __len__(self):
        return len(self.src_pos)


def corr_block(graphs, src, src_ids, *, targets=None, dst=None, dst_ids=None,
               weights=None):
    """Build a CorrBlock from graph-bound vertex indices."""
    g = graphs[src]
    src_ids = np.asarray(src_ids, dtype=np.int64)
    if len(src_ids) and (src_ids.min() < 0 or src_ids.max() >= g.num_bound):
        raise InvalidIndex("source correspondence index out of range")
    m = len(src_ids)
    w = np.ones(m) if weights is None else np.asarray(weights, np.float64)
    block = CorrBlock(
        src=src,
        src_pos=g.bound_positions[src_ids],
        src_bind_idx=g.bind_idx[src_ids],
        src_bind_w=g.bind_w[src_ids],
        weights=w,
    )
    if dst is None:
        block.targets = np.asarray(targets, dtype=np.float64)
    else:
        gd = graphs[dst]
        dst_ids = np.asarray(dst_ids, dtype=np.int64)
        if len(dst_ids) and (dst_ids.min() < 0 or dst_ids.max() >= gd.num_bound):
            raise InvalidIndex("target correspondence index out of range")
        block.dst = dst
        block.dst_pos = gd.bound_positions[dst_ids]
        block.dst_bind_idx = gd.bind_idx[dst_ids]
        block.dst_bind_w = gd.bind_w[dst_ids]
    return block


@dataclass
class SolveInfo:
    energy_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _phi(graph, pos, bind_idx, bind_w):
    # displacement form: identity parameters are exactly the identity map
    out = pos.copy()
    eye = np.eye(3)
    for k in range(bind_idx.shape[1]):
        i = bind_idx[:, k]
        out += bind_w[:, k, None] * (
            np.einsum("mab,mb->ma", graph.affines[i] - eye, pos - graph.nodes[i])
            + graph.translations[i])
    return out


class _Problem:
    """Caches structure; assembles residuals and Jacobians per iterate."""

    def __init__(self, graphs, blocks, alpha_reg, alpha_smooth, alpha_corr):
        self.graphs = graphs
        self.blocks = blocks
        self.sa_reg = np.sqrt(alpha_reg)
        self.sa_smooth = np.sqrt(alpha_smooth)
        self.sa_corr = np.sqrt(alpha_corr)
        self.offsets = np.cumsum([0] + [12 * g.num_nodes for g in graphs])
        self.num_params = int(self.offsets[-1])
        rows = 0
        self.rigid_base = []
        self.smooth_base = []
        self.edges_dir = []
        for g in graphs:
            self.rigid_base.append(rows)
            rows += 9 * g.num_nodes
        for g in graphs:
            e_dir = (np.concatenate([g.edges, g.edges[:, ::-1]], axis=0)
                     if len(g.edges) else np.zeros((0, 2), np.int64))
            self.edges_dir.append(e_dir)
            self.smooth_base.append(rows)
            rows += 3 * len(e_dir)
        self.block_base = []
        for b in blocks:
            self.block_base.append(rows)
            rows += 3 * len(b)
        self.num_rows = rows

    def residuals(self):
        r = np.zeros(self.num_rows)
        for gi, g in enumerate(self.graphs):
            a = g.affines
            m = np.einsum("nab,ncb->nac", a, a) - np.eye(3)
            base = self.rigid_base[gi]
            r[base:base + 9 * g.num_nodes] = self.sa_reg * m.reshape(-1)
            e_dir = self.edges_dir[gi]
            if len(e_dir):
                i, j = e_dir[:, 0], e_dir[:, 1]
                d = g.nodes[j] - g.nodes[i]
                rs = np.einsum("eab,eb->ea", a[i], d) \
                    + g.nodes[i] + g.translations[i] \
                    - g.nodes[j] - g.translations[j]
                base = self.smooth_base[gi]
                r[base:base + 3 * len(e_dir)] = self.sa_smooth * rs.reshape(-1)
        for bi, b in enumerate(self.blocks):
            phi = _phi(self.graphs[b.src], b.src_pos, b.src_bind_idx, b.src_bind_w)
            if b.dst is None:
                res = phi - b.targets
            else:
                res = phi - _phi(self.graphs[b.dst], b.dst_pos,
                                 b.dst_bind_idx, b.dst_bind_w)
            s = self.sa_corr * np.sqrt(b.weights)
            base = self.block_base[bi]
            r[base:base + 3 * len(b)] = (s[:, None] * res).reshape(-1)
        return r

    def jacobian(self):
        rows_all, cols_all, vals_all = [], [], []

        def emit(rows, cols, vals):
            rows_all.append(np.asarray(rows).reshape(-1))
            cols_all.append(np.asarray(cols).reshape(-1))
            vals_all.append(np.asarray(vals).reshape(-1))

        for gi, g in enumerate(self.graphs):
            off = self.offsets[gi]
            l = g.num_nodes
            a = g.affines
            # rigid rows: d vec(A A^T - I)_{ab} / dA_{cd}
            n_idx = np.arange(l)
            ab = np.indices((3, 3))
            row = (self.rigid_base[gi] + 9 * n_idx[:, None, None, None]
                   + 3 * ab[0][None, :, :, None] + ab[1][None, :, :, None]
                   + np.zeros(3, np.int64)[None, None, None, :])
            dloc = np.arange(3)
            col1 = (off + 12 * n_idx[:, None, None, None]
                    + 3 * ab[0][None, :, :, None] + dloc[None, None, None, :])
            # val1[n, a, b, d] = A[n, b, d]
            val1 = self.sa_reg * np.broadcast_to(a[:, None, :, :], (l, 3, 3, 3))
            emit(row, col1, val1)
            col2 = (off + 12 * n_idx[:, None, None, None]
                    + 3 * ab[1][None, :, :, None] + dloc[None, None, None, :])
            # val2[n, a, b, d] = A[n, a, d]
            val2 = self.sa_reg * np.broadcast_to(
                a[:, :, None, :], (l, 3, 3, 3))
            emit(row, col2, val2)

            e_dir = self.edges_dir[gi]
            if len(e_dir):
                i, j = e_dir[:, 0], e_dir[:, 1]
                d = g.nodes[j] - g.nodes[i]
                ne = len(e_dir)
                base = self.smooth_base[gi]
                rr = base + 3 * np.arange(ne)[:, None, None] \
                    + np.arange(3)[None, :, None] \
                    + np.zeros(3, np.int64)[None, None, :]
                cc = off + 12 * i[:, None, None] \
                    + 3 * np.arange(3)[None, :, None] + np.arange(3)[None, None, :]
                vv = self.sa_smooth * np.broadcast_to(d[:, None, :], (ne, 3, 3))
                emit(rr, cc, vv)
                rt = base + 3 * np.arange(ne)[:, None] + np.arange(3)[None, :]
                ct_i = off + 12 * i[:, None] + 9 + np.arange(3)[None, :]
                ct_j = off + 12 * j[:, None] + 9 + np.arange(3)[None, :]
                emit(rt, ct_i, np.full((ne, 3), self.sa_smooth))
                emit(rt, ct_j, np.full((ne, 3), -self.sa_smooth))

        for bi, b in enumerate(self.blocks):
            base = self.block_base[bi]
            m = len(b)
            s = self.sa_corr * np.sqrt(b.weights)
            sides = [(b.src, b.src_pos, b.src_bind_idx, b.src_bind_w, 1.0)]
            if b.dst is not None:
                sides.append((b.dst, b.dst_pos, b.dst_bind_idx, b.dst_bind_w, -1.0))
            for graph_id, pos, bind_idx, bind_w, sign in sides:
                off = self.offsets[graph_id]
                g = self.graphs[graph_id]
                for k in range(bind_idx.shape[1]):
                    i = bind_idx[:, k]
                    wk = bind_w[:, k] * s * sign
                    rel = pos - g.nodes[i]
                    rr = base + 3 * np.arange(m)[:, None, None] \
                        + np.arange(3)[None, :, None] \
                        + np.zeros(3, np.int64)[None, None, :]
                    cc = off + 12 * i[:, None, None] \
                        + 3 * np.arange(3)[None, :, None] \
                        + np.arange(3)[None, None, :]
                    vv = wk[:, None, None] * np.broadcast_to(
                        rel[:, None, :], (m, 3, 3))
                    emit(rr, cc, vv)
                    rt = base + 3 * np.arange(m)[:, None] + np.arange(3)[None, :]
                    ct = off + 12 * i[:, None] + 9 + np.arange(3)[None, :]
                    emit(rt, ct, np.broadcast_to(wk[:, None], (m, 3)))

        rows = np.concatenate(rows_all)
        cols = np.concatenate(cols_all)
        vals = np.concatenate(vals_all)
        return sp.csr_matrix((vals, (rows, cols)),
                             shape=(self.num_rows, self.num_params))

    # -- parameter vector plumbing ------------------------------------
    def get_x(self):
        return np.concatenate([pack_params(g) for g in self.graphs])

    def set_x(self, x):
        for gi, g in enumerate(self.graphs):
            unpack_params(g, x[self.offsets[gi]:self.offsets[gi + 1]])


def solve_graphs(graphs, blocks, alpha_reg=0.2, alpha_smooth=0.5,
                 alpha_corr=1.0, max_iter=100, tol=1e-6, init_damping=1e-4):
    """Jointly optimise the graphs against the given correspondence blocks.

    Updates graph affines/translations in place; returns SolveInfo with a
    monotone energy history. Stops on relative energy decrease below ``tol``
    or after ``max_iter`` accepted iterations.
    """
    prob = _Problem(graphs, blocks, alpha_reg, alpha_smooth, alpha_corr)
    if prob.num_params == 0:
        raise SingularSystem("no graph parameters to solve for")
    x = prob.get_x()
    r = prob.residuals()
    energy = float(r @ r)
    info = SolveInfo(energy_history=[energy])
    lam = init_damping
    for it in range(max_iter):
        jac = prob.jacobian()
        grad = jac.T @ r
        if energy < 1e-18 or np.abs(grad).max() < 1e-12:
            info.converged = True
            break
        h = (jac.T @ jac).tocsc()
        diag = h.diagonal()
        accepted = False
        for _ in range(12):
            damp = sp.diags(lam * (diag + 1e-10))
            try:
                lu = splu((h + damp).tocsc())
                delta = lu.solve(grad)
            except RuntimeError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            x_try = x - delta
            prob.set_x(x_try)
            r_try = prob.residuals()
            e_try = float(r_try @ r_try)
            if e_try < energy:
                accepted = True
                rel = (energy - e_try) / max(energy, 1e-300)
                x, r, energy = x_try, r_try, e_try
                info.energy_history.append(energy)
                lam = max(lam * 0.5, 1e-12)
                break
            lam *= 10.0
        info.iterations = it + 1
        if not accepted:
            prob.set_x(x)  # restore the last accepted iterate
            info.converged = True
            break
        if rel < tol:
            info.converged = True
            break
    prob.set_x(x)
    return info


def solve_pairwise(source, corr_src_ids, corr_targets, corr_weights=None,
                   graph=None, node_count=500, bind_k=4, edge_k=6,
                   alpha_reg=0.2, alpha_smooth=0.5, alpha_corr=1.0,
                   max_iter=100, tol=1e-6):
    """Deform one mesh toward fixed target points.

    ``source`` is a TriMesh or (V, 3) array; a graph is built over it unless
    one is supplied. Returns (graph, SolveInfo).
    """
    if graph is None:
        mesh = source if isinstance(source, TriMesh) else TriMesh(np.asarray(source))
        graph = build_graph(mesh, node_count=node_count,
                            bind_k=bind_k, edge_k=edge_k)
    graphs = [graph]
    block = corr_block(graphs, 0, corr_src_ids, targets=corr_targets,
                       weights=corr_weights)
    info = solve_graphs(graphs, [block], alpha_reg=alpha_reg,
                        alpha_smooth=alpha_smooth, alpha_corr=alpha_corr,
                        max_iter=max_iter, tol=tol)
    return graph, info
