"""Canonical surface extraction from aligned oriented point sets.

A truncated signed-distance field is averaged onto a uniform voxel grid
(point-to-plane distances against the nearest oriented points) and the
zero level set extracted with marching cubes. An export hook writes the
merged oriented points so external reconstruction tools can be swapped in.
"""

import numpy as np
from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from ..errors import EmptyFusion
from ..geometry.mesh import (TriMesh, compute_normals, largest_component,
                             weld_vertices)


def _gather_oriented(pieces):
    pts, nrm = [], []
    for piece in pieces:
        if isinstance(piece, TriMesh):
            p = piece.vertices
            n = piece.normals if piece.normals is not None \
                else compute_normals(piece)
        else:
            p, n = piece
            p = np.asarray(p, dtype=np.float64)
            n = np.asarray(n, dtype=np.float64)
        pts.append(p)
        nrm.append(n)
    if not pts or sum(len(p) for p in pts) == 0:
        raise EmptyFusion("no points to fuse")
    return np.concatenate(pts), np.concatenate(nrm)


def fuse_surface(pieces, voxel_size=0.005, neighbors=8, margin=0.05):
    """Fuse aligned scans into one mesh via signed-distance averaging.

    ``pieces`` are TriMeshes (normals taken or recomputed) or (points,
    normals) tuples. Signed distance at each voxel centre is the average
    point-to-plane distance against the ``neighbors`` nearest oriented
    points, truncated at 3 * voxel_size. Voxels farther than the truncation
    band from every point count as unseen and are excluded from
    triangulation, so only observed surface is extracted; the largest
    connected component is kept.
    """
    points, normals = _gather_oriented(pieces)
    trunc = 3.0 * voxel_size
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = margin * (hi - lo).max() + trunc
    lo -= pad
    hi += pad
    dims = np.maximum(np.ceil((hi - lo) / voxel_size).astype(int) + 1, 2)

    total = int(np.prod(dims))
    sdf = np.full(total, trunc)
    seen = np.zeros(total, dtype=bool)
    ny, nz = int(dims[1]), int(dims[2])

    # coarse occupancy prefilter: with cell edge = trunc = 3 voxels, any
    # voxel within the truncation band of a point lies in that point's
    # 27-cell neighbourhood, so all other voxels are skipped unqueried
    span = np.int64(np.ceil((hi - lo).max() / trunc)) + 3
    cell = np.floor((points - lo) / trunc).astype(np.int64)
    key = (cell[:, 0] * span + cell[:, 1]) * span + cell[:, 2]
    offs = np.array([(dx * span + dy) * span + dz
                     for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                     for dz in (-1, 0, 1)], dtype=np.int64)
    active = np.unique(np.unique(key)[:, None] + offs[None, :])

    def voxel_coords(flat):
        out = np.empty((len(flat), 3), dtype=np.int64)
        out[:, 0] = flat // (ny * nz)
        out[:, 1] = (flat // nz) % ny
        out[:, 2] = flat % nz
        return out

    candidate_chunks = []
    scan_chunk = 4_000_000
    for start in range(0, total, scan_chunk):
        flat = np.arange(start, min(start + scan_chunk, total),
                         dtype=np.int64)
        vcell = voxel_coords(flat) // 3
        vkey = (vcell[:, 0] * span + vcell[:, 1]) * span + vcell[:, 2]
        candidate_chunks.append(flat[np.isin(vkey, active)])
    candidates = np.concatenate(candidate_chunks)

    tree = cKDTree(points)
    k = min(neighbors, len(points))
    chunk = 500_000
    for start in range(0, len(candidates), chunk):
        flat = candidates[start:start + chunk]
        centers = lo + voxel_size * voxel_coords(flat)
        d, idx = tree.query(centers, k=k, workers=-1)
        d = d.reshape(len(flat), k)
        idx = idx.reshape(len(flat), k)
        near = d[:, 0] <= trunc
        if not near.any():
            continue
        sub = centers[near]
        idx = idx[near]
        diff = sub[:, None, :] - points[idx]
        plane = np.einsum("mkd,mkd->mk", diff, normals[idx]).mean(axis=1)
        where = flat[near]
        sdf[where] = np.clip(plane, -trunc, trunc)
        seen[where] = True

    if not seen.any():
        raise EmptyFusion("no voxel lies within the truncation band")
    volume = sdf.reshape(dims)
    mask = seen.reshape(dims)
    try:
        verts, faces, _, _ = marching_cubes(
            volume, level=0.0, spacing=(voxel_size,) * 3, mask=mask,
            allow_degenerate=False)
    except (ValueError, RuntimeError) as exc:
        raise EmptyFusion(
            f"signed distance field has no zero crossing ({exc})") from None
    if len(faces) == 0:
        raise EmptyFusion("marching cubes produced no faces")
    mesh = weld_vertices(TriMesh(verts + lo, faces.astype(np.int64)))
    mesh = largest_component(mesh)
    return compute_normals(mesh)


def export_oriented_points(path, pieces):
    """Write the merged cloud as an ASCII PLY with per-point normals.

    Lets external surface reconstruction (for example screened Poisson)
    replace the built-in fusion without touching the pipeline.
    """
    points, normals = _gather_oriented(pieces)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(points)}\n")
        for prop in ("x", "y", "z", "nx", "ny", "nz"):
            fh.write(f"property double {prop}\n")
        fh.write("end_header\n")
        for p, n in zip(points, normals):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} "
                     f"{n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
