"""Texture atlas construction: projection, view selection and packing.

The atlas is built sequentially. The reference view textures every face it
sees; each later view first renders the current textured model from its own
camera, softly warps its captured image toward that rendering, and then
contributes texture for faces no earlier view covered. A final per-face view
selection rescores all views and packs their images into one atlas.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DimensionMismatch, UncoveredFaces
from ..geometry.images import save_png
from ..geometry.mesh import VertexIndex, compute_normals, face_normals
from ..graph.build import deform
from ..graph.solver import solve_pairwise
from .render import SENTINEL, render_model_view, visible_faces
from .warp import solve_warp, warp_image


@dataclass
class TextureAtlas:
    """Per-face texture source and coordinates.

    view_of_face : (F,) int64 source view per face, -1 when unassigned.
    face_uv : (F, 3, 2) float64 per-corner coordinates in [0, 1]^2; for a
        partial atlas they index the source view's image, for a packed atlas
        the combined atlas image.
    images : dict of view id -> (H, W, 3) float image in [0, 1].
    atlas_image : packed image once view selection has run, else None.
    uncovered : faces no view covered (filled by the nearest-face fallback).
    """

    view_of_face: np.ndarray
    face_uv: np.ndarray
    images: dict = field(default_factory=dict)
    atlas_image: np.ndarray | None = None
    uncovered: np.ndarray | None = None

    def __post_init__(self):
        self.view_of_face = np.ascontiguousarray(self.view_of_face, dtype=np.int64)
        self.face_uv = np.ascontiguousarray(self.face_uv, dtype=np.float64)
        if self.face_uv.shape != (len(self.view_of_face), 3, 2):
            raise DimensionMismatch(
                f"face_uv must be ({len(self.view_of_face)}, 3, 2), "
                f"got {self.face_uv.shape}")
        assigned = self.view_of_face >= 0
        uv = self.face_uv[assigned]
        if uv.size and (uv.min() < -1e-9 or uv.max() > 1.0 + 1e-9):
            raise DimensionMismatch("texture coordinates leave [0, 1]")

    @property
    def num_faces(self):
        return len(self.view_of_face)

    def assigned(self):
        """Boolean mask of faces with a texture source."""
        return self.view_of_face >= 0


def empty_atlas(num_faces):
    """Atlas with every face unassigned."""
    return TextureAtlas(
        view_of_face=np.full(num_faces, -1, dtype=np.int64),
        face_uv=np.zeros((num_faces, 3, 2)),
        images={})


def _as_float_image(image):
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return np.asarray(img, dtype=np.float64)


def project_reference(mesh, scan, view_id=0, bias=1e-4, image=None):
    """Texture every face visible in one view by projecting it onto the image.

    Faces must be front-facing and pass the depth-buffer visibility probe
    (bias in metres); their corners' projected pixel positions become the
    texture coordinates. ``image`` overrides the scan's captured image (used
    for warped copies). Returns a partial atlas holding this single view.
    """
    camera = scan.camera
    vis = visible_faces(mesh, camera, bias=bias)
    pts = camera.project(mesh.vertices)
    atlas = empty_atlas(mesh.num_faces)
    atlas.view_of_face[vis] = view_id
    corner_uv = pts[mesh.faces][..., :2] / [camera.width - 1.0,
                                            camera.height - 1.0]
    atlas.face_uv[vis] = np.clip(corner_uv[vis], 0.0, 1.0)
    atlas.images[view_id] = _as_float_image(
        scan.color_image if image is None else image)
    return atlas


def pose_model_to_view(mesh, scan_mesh, aligned_vertices, tau_corr=0.03,
                       node_count=500, bind_k=4, edge_k=6, alpha_reg=0.2,
                       alpha_smooth=0.5, alpha_corr=1.0, max_iter=50,
                       tol=1e-6):
    """Deform the canonical model into one capture frame.

    ``aligned_vertices`` are the frame's scan vertices after global
    alignment moved them into the canonical frame. Each model vertex within
    ``tau_corr`` of an aligned scan vertex is pulled to that scan vertex's
    original in-frame position through a deformation graph solve. Returns
    the deformed mesh (normals recomputed).
    """
    idx, d = VertexIndex(aligned_vertices).query(mesh.vertices)
    keep = d <= tau_corr
    src_ids = np.flatnonzero(keep)
    if len(src_ids) == 0:
        return mesh.copy()
    targets = scan_mesh.vertices[idx[keep]]
    graph, _ = solve_pairwise(
        mesh, src_ids, targets, node_count=min(node_count, mesh.num_vertices),
        bind_k=bind_k, edge_k=edge_k, alpha_reg=alpha_reg,
        alpha_smooth=alpha_smooth, alpha_corr=alpha_corr,
        max_iter=max_iter, tol=tol)
    return compute_normals(mesh.with_vertices(deform(graph)))


def texture_view(mesh, atlas, scan, view_id, flow_hat=None, lambda_s=0.8,
                 lambda_b=1.0, bias=1e-4):
    """Fold one additional view into a partial atlas.

    Renders the current model from the view's camera to find the overlap
    (pixels already textured) and non-overlap (pixels awaiting texture)
    regions, solves for a warp aligning the captured image to the rendering
    (``flow_hat`` seeds the overlap; zero when absent), and assigns the
    warped image to faces not yet covered. Returns (atlas, debug) where
    debug holds the rendered, warped and difference images.
    """
    camera = scan.camera
    model_rgb, _, face_id = render_model_view(mesh, atlas, camera)
    covered = face_id >= 0
    textured = np.zeros_like(covered)
    textured[covered] = atlas.view_of_face[face_id[covered]] >= 0
    overlap = covered & textured
    outside = covered & ~textured

    if flow_hat is None:
        flow_hat = np.zeros((camera.height, camera.width, 2))
    captured = _as_float_image(scan.color_image)
    if overlap.any() or outside.any():
        fld = solve_warp(flow_hat, overlap, outside,
                         lambda_s=lambda_s, lambda_b=lambda_b)
        warped, valid = warp_image(captured, fld)
        warped = np.where(valid[..., None], warped, captured)
    else:
        warped = captured

    vis = visible_faces(mesh, camera, bias=bias)
    new = vis & ~atlas.assigned()
    pts = camera.project(mesh.vertices)
    corner_uv = pts[mesh.faces][..., :2] / [camera.width - 1.0,
                                            camera.height - 1.0]
    atlas.view_of_face[new] = view_id
    atlas.face_uv[new] = np.clip(corner_uv[new], 0.0, 1.0)
    atlas.images[view_id] = warped

    diff = np.abs(model_rgb - warped)
    diff[~overlap] = 0.0
    debug = {"model": model_rgb, "warped": warped, "diff": diff}
    return atlas, debug


def view_scores(meshes, cameras, atlases):
    """Cosine-visibility score of every (view, face) pair.

    score = max(0, cos of the angle between the face normal and the
    direction to the camera), zeroed for faces the view's atlas does not
    cover. ``meshes`` holds the model geometry per view (posed into that
    frame when the subject moved).
    """
    f_count = atlases[0].num_faces
    scores = np.zeros((len(cameras), f_count))
    for k, (mesh, camera, atlas) in enumerate(zip(meshes, cameras, atlases)):
        fn = face_normals(mesh)
        centroid = mesh.vertices[mesh.faces].mean(axis=1)
        to_cam = camera.center_world() - centroid
        to_cam /= np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-30)
        cos = np.einsum("ij,ij->i", fn, to_cam)
        scores[k] = np.maximum(cos, 0.0) * (atlas.view_of_face >= 0)
    return scores


def select_views(mesh, scans, atlases, posed_meshes=None):
    """Assign each face its best view and pack all views into one atlas.

    ``atlases`` holds one single-view partial atlas per scan, each knowing
    which faces its view saw. Views are scored by ``view_scores``; ties
    resolve to the earliest view in sequence order. Faces no view covers
    are reported in ``uncovered`` and textured from the nearest covered
    face's patch; when nothing covers any face, UncoveredFaces is raised.
    """
    if posed_meshes is None:
        posed_meshes = [mesh] * len(scans)
    cameras = [scan.camera for scan in scans]
    scores = view_scores(posed_meshes, cameras, atlases)
    best = scores.argmax(axis=0)
    covered = scores.max(axis=0) > 0.0
    if not covered.any():
        raise UncoveredFaces(np.flatnonzero(~covered))

    assignment = best.copy()
    face_uv = np.zeros((mesh.num_faces, 3, 2))
    for k, atlas in enumerate(atlases):
        sel = covered & (assignment == k)
        face_uv[sel] = atlas.face_uv[sel]

    # fallback: uncovered faces borrow the nearest covered face's patch
    uncovered = np.flatnonzero(~covered)
    if len(uncovered):
        centroids = mesh.vertices[mesh.faces].mean(axis=1)
        covered_ids = np.flatnonzero(covered)
        _, near = cKDTree(centroids[covered_ids]).query(centroids[uncovered])
        donors = covered_ids[near]
        assignment[uncovered] = assignment[donors]
        face_uv[uncovered] = face_uv[donors]

    used = np.unique(assignment)
    images = {int(k): atlases[k].images[int(k)] for k in used}
    packed_image, packed_uv = _pack(images, assignment, face_uv)
    return TextureAtlas(
        view_of_face=assignment,
        face_uv=packed_uv,
        images=images,
        atlas_image=packed_image,
        uncovered=uncovered)


def _pack(images, assignment, face_uv):
    """Lay per-view images out on a fixed grid and remap coordinates."""
    keys = sorted(images)
    cols = int(np.ceil(np.sqrt(len(keys))))
    rows = int(np.ceil(len(keys) / cols))
    tile_h = max(images[k].shape[0] for k in keys)
    tile_w = max(images[k].shape[1] for k in keys)
    atlas_h, atlas_w = rows * tile_h, cols * tile_w
    packed = np.full((atlas_h, atlas_w, 3), SENTINEL)
    origin = {}
    for i, k in enumerate(keys):
        r, c = divmod(i, cols)
        oy, ox = r * tile_h, c * tile_w
        img = images[k]
        packed[oy:oy + img.shape[0], ox:ox + img.shape[1]] = img
        origin[k] = (ox, oy)
    out_uv = np.zeros_like(face_uv)
    for k in keys:
        sel = assignment == k
        img = images[k]
        px = face_uv[sel] * [img.shape[1] - 1.0, img.shape[0] - 1.0]
        px += origin[k]
        out_uv[sel] = px / [atlas_w - 1.0, atlas_h - 1.0]
    return packed, out_uv


def texture_model(mesh, scans, reference=0, posed_meshes=None, flows=None,
                  lambda_s=0.8, lambda_b=1.0, bias=1e-4):
    """Run the full sequential texturing pass over all views.

    Views are processed in manifest order starting at the reference. Each
    non-reference view is warped against the model textured so far
    (``flows`` optionally seeds the per-view warp estimates by view index),
    then the per-view atlases are rescored and packed. Returns the final
    packed atlas and a per-view debug-image dict.
    """
    if posed_meshes is None:
        posed_meshes = [mesh] * len(scans)
    order = [reference] + [k for k in range(len(scans)) if k != reference]
    cumulative = empty_atlas(mesh.num_faces)
    per_view = [None] * len(scans)
    debug = {}
    for step, k in enumerate(order):
        posed = posed_meshes[k]
        if step == 0:
            part = project_reference(posed, scans[k], view_id=k, bias=bias)
            per_view[k] = part
            cumulative.view_of_face[:] = part.view_of_face
            cumulative.face_uv[:] = part.face_uv
            cumulative.images[k] = part.images[k]
            continue
        flow_hat = None if flows is None else flows.get(k)
        cumulative, dbg = texture_view(
            posed, cumulative, scans[k], k, flow_hat=flow_hat,
            lambda_s=lambda_s, lambda_b=lambda_b, bias=bias)
        per_view[k] = project_reference(
            posed, scans[k], view_id=k, bias=bias, image=dbg["warped"])
        debug[k] = dbg
    final = select_views(mesh, scans, per_view, posed_meshes=posed_meshes)
    return final, debug


def save_atlas(prefix, mesh, atlas):
    """Write a packed atlas as OBJ + MTL + PNG.

    ``prefix`` names the output triple (prefix.obj/.mtl/.png). Texture
    coordinates are written per face corner with the v axis flipped to the
    bottom-left origin convention of OBJ.
    """
    prefix = Path(prefix)
    if atlas.atlas_image is None:
        raise DimensionMismatch("atlas is not packed; run view selection first")
    obj_path = prefix.with_suffix(".obj")
    mtl_path = prefix.with_suffix(".mtl")
    png_path = prefix.with_suffix(".png")

    lines = [f"mtllib {mtl_path.name}", "usemtl textured"]
    for v in mesh.vertices:
        lines.append("v " + " ".join("%.9g" % x for x in v))
    for fi in range(mesh.num_faces):
        for c in range(3):
            u, vv = atlas.face_uv[fi, c]
            lines.append("vt %.9g %.9g" % (u, 1.0 - vv))
    for fi, f in enumerate(mesh.faces):
        corners = " ".join(f"{f[c] + 1}/{3 * fi + c + 1}" for c in range(3))
        lines.append("f " + corners)
    obj_path.write_text("\n".join(lines) + "\n")

    mtl_path.write_text(
        "newmtl textured\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\n"
        f"map_Kd {png_path.name}\n")
    save_png(png_path, atlas.atlas_image)
