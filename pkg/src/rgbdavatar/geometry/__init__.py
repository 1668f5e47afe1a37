from .mesh import (TriMesh, VertexIndex, compute_normals, face_normals,
                   largest_component, mesh_error, nearest_vertex,
                   subdivide_midpoint, vertex_errors_mm, weld_vertices)
from .camera import Camera, PartialScan, backproject
from .meshio import load_mesh, save_mesh
from .images import smooth_depth
from . import images

__all__ = [
    "TriMesh", "VertexIndex", "compute_normals", "face_normals",
    "largest_component", "mesh_error", "nearest_vertex", "subdivide_midpoint",
    "vertex_errors_mm", "weld_vertices", "Camera", "PartialScan", "backproject",
    "load_mesh", "save_mesh", "smooth_depth", "images",
]
