"""Scan-to-scan correspondence transfer, global alignment, and fusion."""

from .align import (CanonicalModel, correspondence_residuals, global_align,
                    sparse_align)
from .correspond import (CorrespondenceSet, PairSelection,
                         load_correspondences, overlap_score, select_pairs,
                         save_correspondences, transfer_correspondences)
from .flow import (FlowField, load_flow, refine_with_flow, render_vertex_map,
                   save_flow)
from .surface import export_oriented_points, fuse_surface

__all__ = [
    "CanonicalModel",
    "CorrespondenceSet",
    "FlowField",
    "PairSelection",
    "correspondence_residuals",
    "export_oriented_points",
    "fuse_surface",
    "global_align",
    "load_correspondences",
    "load_flow",
    "overlap_score",
    "refine_with_flow",
    "render_vertex_map",
    "save_correspondences",
    "save_flow",
    "select_pairs",
    "sparse_align",
    "transfer_correspondences",
]
