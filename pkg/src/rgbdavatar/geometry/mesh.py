"""Triangle mesh container and basic geometric queries."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DimensionMismatch, InvalidIndex


@dataclass
class TriMesh:
    """Indexed triangle mesh with optional per-vertex attributes.

    vertices : (V, 3) float64 positions in metres.
    faces : (F, 3) int64 vertex indices (may be empty for point clouds).
    normals : optional (V, 3) unit vertex normals.
    colors : optional (V, 3) float RGB in [0, 1].
    labels : optional (V,) int body-part labels.
    uv : optional (V, 2) float texture coordinates.
    """

    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.int64))
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None
    labels: np.ndarray | None = None
    uv: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DimensionMismatch(f"vertices must be (V, 3), got {self.vertices.shape}")
        if self.faces.size and self.faces.shape[1] != 3:
            raise DimensionMismatch(f"faces must be (F, 3), got {self.faces.shape}")
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise InvalidIndex("face index out of range")
        for name in ("normals", "colors", "labels", "uv"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.ascontiguousarray(arr)
                if len(arr) != len(self.vertices):
                    raise DimensionMismatch(
                        f"{name} has {len(arr)} entries for {len(self.vertices)} vertices")
                setattr(self, name, arr)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_faces(self):
        return len(self.faces)

    def copy(self):
        return TriMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.colors is None else self.colors.copy(),
            None if self.labels is None else self.labels.copy(),
            None if self.uv is None else self.uv.copy(),
        )

    def with_vertices(self, vertices):
        """Same connectivity and attributes, new vertex positions."""
        out = self.copy()
        out.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if len(out.vertices) != len(self.vertices):
            raise DimensionMismatch("vertex count changed")
        return out


def face_normals(mesh):
    """Per-face unit normals (zero for degenerate faces)."""
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    lens = np.linalg.norm(n, axis=1)
    good = lens > 0.0
    n[good] /= lens[good, None]
    return n


def compute_normals(mesh):
    """Area-weighted per-vertex unit normals.

    Returns a new mesh; isolated vertices get the fallback normal (0, 0, 1).
    """
    v = mesh.vertices
    f = mesh.faces
    acc = np.zeros_like(v)
    if len(f):
        fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        for c in range(3):
            np.add.at(acc, f[:, c], fn)
    lens = np.linalg.norm(acc, axis=1)
    good = lens > 0.0
    out = np.zeros_like(v)
    out[good] = acc[good] / lens[good, None]
    out[~good] = (0.0, 0.0, 1.0)
    res = mesh.copy()
    res.normals = out
    return res


class VertexIndex:
    """KD-tree over mesh vertices for batched nearest-vertex queries."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self._tree = cKDTree(self.points)

    def query(self, q, workers=-1):
        """Nearest vertex index and distance for each query point."""
        d, i = self._tree.query(np.asarray(q, dtype=np.float64), workers=workers)
        return np.asarray(i, dtype=np.int64), np.asarray(d, dtype=np.float64)

    def query_ball(self, q, r):
        return self._tree.query_ball_point(q, r)


def nearest_vertex(mesh, point):
    """Index and distance of the mesh vertex closest to ``point``.

    Exact ties are broken toward the lowest vertex index.
    """
    pts = mesh.vertices
    point = np.asarray(point, dtype=np.float64)
    tree = cKDTree(pts)
    d0, _ = tree.query(point)
    # closed-ball lookup catches every vertex at exactly the minimal distance
    cand = sorted(tree.query_ball_point(point, d0 * (1.0 + 1e-12) + 1e-300))
    if not cand:
        return 0, float(np.linalg.norm(pts[0] - point))
    dists = np.linalg.norm(pts[cand] - point, axis=1)
    best = dists.min()
    for idx, dist in zip(cand, dists):
        if dist == best:
            return int(idx), float(dist)
    return int(cand[0]), float(dists[0])


def mesh_error(reconstructed, ground_truth):
    """Mean distance (mm) from reconstructed vertices to nearest GT vertices."""
    if reconstructed.num_vertices == 0:
        raise DimensionMismatch("reconstructed mesh has no vertices")
    idx = VertexIndex(ground_truth.vertices)
    _, d = idx.query(reconstructed.vertices)
    return float(d.mean() * 1000.0)


def vertex_errors_mm(reconstructed, ground_truth):
    """Per-vertex nearest-GT-vertex distances in millimetres."""
    idx = VertexIndex(ground_truth.vertices)
    _, d = idx.query(reconstructed.vertices)
    return d * 1000.0


def edge_face_incidence(mesh):
    """Counts of faces incident to each undirected edge.

    Returns (edges (E, 2) with lo < hi, counts (E,)). A closed 2-manifold has
    every count equal to 2; boundary edges have count 1.
    """
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    e = np.sort(e, axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def weld_vertices(mesh, tol=1e-9):
    """Merge coincident vertices and drop collapsed faces.

    Marching cubes emits duplicate vertices and zero-area faces wherever the
    level set passes exactly through grid nodes. Vertices within ``tol`` of
    each other (per axis) are merged, faces left without three distinct
    corners are removed, and vertices no longer referenced by any face are
    compacted away. Per-vertex attributes follow the kept representative.
    Meshes without faces just get duplicate vertices removed.
    """
    v = mesh.vertices
    key = np.round(v / tol).astype(np.int64)
    _, rep, inv = np.unique(key, axis=0, return_index=True,
                            return_inverse=True)
    if not mesh.num_faces:
        keep = np.ones(len(rep), dtype=bool)
        faces = mesh.faces.copy()
    else:
        faces = inv[mesh.faces]
        distinct = ((faces[:, 0] != faces[:, 1])
                    & (faces[:, 1] != faces[:, 2])
                    & (faces[:, 2] != faces[:, 0]))
        faces = faces[distinct]
        keep = np.zeros(len(rep), dtype=bool)
        keep[faces.ravel()] = True
        remap = np.cumsum(keep) - 1
        faces = remap[faces]
    sel = rep[keep]
    return TriMesh(
        v[sel],
        faces,
        None if mesh.normals is None else mesh.normals[sel],
        None if mesh.colors is None else mesh.colors[sel],
        None if mesh.labels is None else mesh.labels[sel],
        None if mesh.uv is None else mesh.uv[sel],
    )


def largest_component(mesh):
    """Restrict the mesh to its largest vertex-connected component."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    v_count = mesh.num_vertices
    f = mesh.faces
    if not len(f):
        return mesh.copy()
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(v_count, v_count))
    n_comp, label = connected_components(adj, directed=False)
    if n_comp <= 1:
        return mesh.copy()
    face_label = label[f[:, 0]]
    sizes = np.bincount(face_label, minlength=n_comp)
    keep_label = int(sizes.argmax())
    keep_faces = f[face_label == keep_label]
    keep_verts = np.flatnonzero(label == keep_label)
    remap = np.full(v_count, -1, dtype=np.int64)
    remap[keep_verts] = np.arange(len(keep_verts))
    out = TriMesh(
        mesh.vertices[keep_verts],
        remap[keep_faces],
        None if mesh.normals is None else mesh.normals[keep_verts],
        None if mesh.colors is None else mesh.colors[keep_verts],
        None if mesh.labels is None else mesh.labels[keep_verts],
        None if mesh.uv is None else mesh.uv[keep_verts],
    )
    return out


def subdivide_midpoint(mesh):
    """One round of midpoint (1-to-4) subdivision.

    New vertices sit exactly on the input's piecewise-linear surface, so the
    result is a denser sampling of the same geometry.
    """
    v = mesh.vertices
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    edges_sorted = np.sort(edges, axis=1)
    uniq, inv = np.unique(edges_sorted, axis=0, return_inverse=True)
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    new_v = np.concatenate([v, mid], axis=0)
    m01 = len(v) + inv[:len(f)]
    m12 = len(v) + inv[len(f):2 * len(f)]
    m20 = len(v) + inv[2 * len(f):]
    new_f = np.concatenate([
        np.stack([f[:, 0], m01, m20], axis=1),
        np.stack([m01, f[:, 1], m12], axis=1),
        np.stack([m20, m12, f[:, 2]], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ], axis=0)
    return TriMesh(new_v, new_f)
