from .build import (DeformGraph, build_graph, build_graph_topology,
                    compatible_parts, cut_incompatible_faces, deform,
                    farthest_point_sample)
from .energies import (bind_positions, deform_points, e_corr, e_rigid,
                       e_smooth, pack_params, unpack_params)
from .solver import CorrBlock, SolveInfo, corr_block, solve_graphs, solve_pairwise

__all__ = [
    "DeformGraph", "build_graph", "build_graph_topology", "compatible_parts",
    "cut_incompatible_faces", "deform", "farthest_point_sample",
    "bind_positions", "deform_points", "e_corr", "e_rigid", "e_smooth",
    "pack_params", "unpack_params",
    "CorrBlock", "SolveInfo", "corr_block", "solve_graphs", "solve_pairwise",
]
