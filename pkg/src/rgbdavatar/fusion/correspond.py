"""Template-mediated correspondences between partial scans.

Two scans of the same subject are linked through their fitted template
meshes: a scan vertex is matched to its nearest template vertex, carried to
the same-index vertex on the other frame's template, and finally matched to
the nearest vertex of the other scan. Pairs are dropped whenever any hop
exceeds the distance threshold.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyCorrespondences, ParseError
from ..geometry.mesh import TriMesh, VertexIndex


@dataclass
class CorrespondenceSet:
    """Vertex-index pairs between a source and a destination mesh."""

    src_idx: np.ndarray
    dst_idx: np.ndarray
    weights: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        self.src_idx = np.asarray(self.src_idx, dtype=np.int64)
        self.dst_idx = np.asarray(self.dst_idx, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.provenance = np.asarray(self.provenance, dtype="U16")
        n = len(self.src_idx)
        if not (len(self.dst_idx) == len(self.weights)
                == len(self.provenance) == n):
            raise ValueError("correspondence arrays must share one length")

    def __len__(self):
        return len(self.src_idx)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64),
                   np.zeros(0), np.zeros(0, "U16"))

    def merged(self, other):
        """Concatenation of two sets over the same mesh pair."""
        return CorrespondenceSet(
            np.concatenate([self.src_idx, other.src_idx]),
            np.concatenate([self.dst_idx, other.dst_idx]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.provenance, other.provenance]))


@dataclass
class PairSelection:
    """Scan pairs retained for alignment, with their overlap scores."""

    pairs: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def _vertices(mesh):
    return mesh.vertices if isinstance(mesh, TriMesh) else \
        np.asarray(mesh, dtype=np.float64)


def transfer_correspondences(scan_i, template_i, scan_j, template_j,
                             tau_corr=0.03):
    """Match scan_i vertices to scan_j vertices through the templates.

    Both templates must share vertex indexing (the same body model
    topology). Raises EmptyCorrespondences when fewer than 10 pairs survive
    the distance thresholds.
    """
    pi = _vertices(scan_i)
    ti = _vertices(template_i)
    pj = _vertices(scan_j)
    tj = _vertices(template_j)
    if len(ti) != len(tj):
        raise EmptyCorrespondences(
            "templates do not share vertex indexing "
            f"({len(ti)} vs {len(tj)} vertices)")

    idx_t, d_it = VertexIndex(ti).query(pi)
    keep = d_it <= tau_corr
    src = np.nonzero(keep)[0]
    carried = tj[idx_t[keep]]
    idx_j, d_tj = VertexIndex(pj).query(carried)
    keep2 = d_tj <= tau_corr
    src = src[keep2]
    dst = idx_j[keep2]
    if len(src) < 10:
        raise EmptyCorrespondences(
            f"only {len(src)} template-transferred pairs survive "
            f"tau_corr={tau_corr}")
    return CorrespondenceSet(src, dst, np.ones(len(src)),
                             np.full(len(src), "template"))


def overlap_score(scan_i, scan_j, template_i, template_j, tau_corr=0.03):
    """Fraction of template vertices observed by both scans.

    A template vertex counts when scan_i has a vertex within ``tau_corr``
    of it on frame i's template and scan_j has one within ``tau_corr`` of
    the same-index vertex on frame j's template.
    """
    ti = _vertices(template_i)
    tj = _vertices(template_j)
    if len(ti) != len(tj):
        raise EmptyCorrespondences(
            "templates do not share vertex indexing "
            f"({len(ti)} vs {len(tj)} vertices)")
    _, d_i = VertexIndex(_vertices(scan_i)).query(ti)
    _, d_j = VertexIndex(_vertices(scan_j)).query(tj)
    both = (d_i <= tau_corr) & (d_j <= tau_corr)
    return float(both.mean())


def select_pairs(scans, templates, s_min=0.3, tau_corr=0.03):
    """Score all scan pairs and keep those with sufficient overlap."""
    sel = PairSelection()
    n = len(scans)
    for i in range(n):
        for j in range(i + 1, n):
            score = overlap_score(scans[i], scans[j],
                                  templates[i], templates[j],
                                  tau_corr=tau_corr)
            if score >= s_min:
                sel.pairs.append((i, j, score))
    return sel


def save_correspondences(path, corr):
    """Write one 'src_idx dst_idx weight provenance' line per pair."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"correspondences {len(corr)}\n")
        for s, d, w, p in zip(corr.src_idx, corr.dst_idx,
                              corr.weights, corr.provenance):
            fh.write(f"{s} {d} {w:.9g} {p}\n")


def load_correspondences(path):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "correspondences":
            raise ParseError(path, 1, "expected 'correspondences N' header")
        count = int(header[1])
        src = np.zeros(count, np.int64)
        dst = np.zeros(count, np.int64)
        wts = np.zeros(count)
        prov = np.zeros(count, "U16")
        for k in range(count):
            line_no = k + 2
            parts = fh.readline().split()
            if len(parts) != 4:
                raise ParseError(path, line_no,
                                 "expected 'src dst weight provenance'")
            try:
                src[k], dst[k], wts[k] = \
                    int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            prov[k] = parts[3]
    return CorrespondenceSet(src, dst, wts, prov)
