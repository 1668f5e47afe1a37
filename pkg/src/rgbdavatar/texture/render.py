"""Software rendering of textured models and face visibility queries."""

import numpy as np

from .. import kernels
from ..geometry.images import bilinear_sample
from ..geometry.mesh import face_normals

# colour rendered for pixels with no texture assignment yet
SENTINEL = np.array([1.0, 0.0, 1.0])


def visible_faces(mesh, camera, bias=1e-4):
    """Boolean mask of faces visible from a camera.

    A face counts as visible when it is front-facing, all three corners
    project inside the image in front of the camera, and it passes the
    depth-buffer test: either the face wins the z-buffer for at least one
    pixel, or (for faces too small to own a pixel) every corner's depth
    stays within ``bias`` metres of the rendered depth at its pixel.
    Occluded faces own no pixel and their corner probes land behind the
    occluder, so both branches reject them.
    """
    pts = camera.project(mesh.vertices)
    depth, face_id, _ = kernels.rasterize(
        pts, mesh.faces, camera.width, camera.height)

    fn = face_normals(mesh)
    centroid = mesh.vertices[mesh.faces].mean(axis=1)
    front = np.einsum("ij,ij->i", fn, centroid - camera.center_world()) < 0.0

    corner = pts[mesh.faces]                      # (F, 3, 3) -> u, v, z
    u, v, z = corner[..., 0], corner[..., 1], corner[..., 2]
    inside = ((z > 0.0) & (u >= 0.0) & (u <= camera.width - 1.0)
              & (v >= 0.0) & (v <= camera.height - 1.0))

    owns = np.zeros(mesh.num_faces, dtype=bool)
    owns[face_id[face_id >= 0]] = True

    px = np.clip(np.round(u).astype(np.int64), 0, camera.width - 1)
    py = np.clip(np.round(v).astype(np.int64), 0, camera.height - 1)
    probe = depth[py, px]
    probe_ok = ((probe > 0.0) & (z <= probe + bias)).all(axis=1)

    return front & inside.all(axis=1) & (owns | probe_ok)


def render_model_view(mesh, atlas, camera):
    """Render a (partially) textured model from a camera.

    Returns (rgb, depth, face_id). Pixels covered by no face, or by a face
    with no texture assignment, take the sentinel colour; textured pixels
    sample their face's source view at barycentrically interpolated
    coordinates.
    """
    pts = camera.project(mesh.vertices)
    depth, face_id, bary = kernels.rasterize(
        pts, mesh.faces, camera.width, camera.height)
    rgb = np.full((camera.height, camera.width, 3), SENTINEL)

    covered = face_id >= 0
    fid = face_id[covered]
    views = atlas.view_of_face[fid]
    uv = np.einsum("pc,pcd->pd", bary[covered], atlas.face_uv[fid])
    out = np.full((len(fid), 3), SENTINEL)
    packed = atlas.atlas_image is not None
    for view in np.unique(views):
        if view < 0:
            continue
        # a packed atlas keeps all views in one image; partial atlases
        # sample each face's own source view
        image = atlas.atlas_image if packed else atlas.images[int(view)]
        ih, iw = image.shape[:2]
        sel = views == view
        px = uv[sel] * [iw - 1.0, ih - 1.0]
        # nudge exact-boundary samples inward so edge texels stay valid
        px = np.clip(px, 0.0, [iw - 1.0 - 1e-9, ih - 1.0 - 1e-9])
        vals, valid = bilinear_sample(image, px)
        out[sel] = np.where(valid[:, None], vals, SENTINEL)
    rgb[covered] = out
    return rgb, depth, face_id
