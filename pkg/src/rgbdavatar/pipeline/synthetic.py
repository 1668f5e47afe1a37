"""Synthetic capture generator: orbiting RGB-D views of a posed mannequin.

Produces everything a pipeline run consumes — depth/colour images, camera
files, joint observations, a pose prior, the body model — plus ground truth
(canonical mesh and parameters) for evaluation.  All randomness goes through
one seeded generator, so a (seed, settings) pair reproduces the dataset
byte for byte.
"""

import json
from pathlib import Path

import numpy as np

from .. import kernels
from ..body.io import save_model, save_pose_prior
from ..body.mannequin import JOINT_NAMES, MannequinSpec, make_mannequin
from ..body.model import PoseParams, ShapeParams, posed_joints, skin
from ..body.prior import GmmPrior
from ..errors import InvalidSpec
from ..fusion.flow import FlowField, save_flow
from ..geometry.camera import Camera
from ..geometry.images import save_camera, save_depth_pgm, save_joints, save_png
from ..geometry.meshio import save_mesh


def look_at_camera(eye, center, fx, fy, width, height):
    """Camera at ``eye`` whose optical axis points at ``center``.

    The image x axis stays as horizontal as possible and the image y axis
    points towards world-down (-y up convention), matching the package's
    +y-down camera frame.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(center, dtype=np.float64) - eye
    forward = forward / np.linalg.norm(forward)
    down = np.array([0.0, -1.0, 0.0])
    y_cam = down - forward * (down @ forward)
    norm = np.linalg.norm(y_cam)
    if norm < 1e-9:
        raise InvalidSpec("camera cannot look straight up or down")
    y_cam = y_cam / norm
    x_cam = np.cross(y_cam, forward)
    rotation = np.stack([x_cam, y_cam, forward], axis=1)
    return Camera(fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                  width=width, height=height,
                  rotation=rotation, translation=eye)


def orbit_cameras(count, center, radius, focal, width, height, elevation=0.0):
    """``count`` cameras on a horizontal circle, all aimed at ``center``."""
    center = np.asarray(center, dtype=np.float64)
    cams = []
    for k in range(count):
        az = 2.0 * np.pi * k / count
        eye = center + np.array([radius * np.sin(az), elevation,
                                 radius * np.cos(az)])
        cams.append(look_at_camera(eye, center, focal, focal, width, height))
    return cams


def vertex_colors(rest_vertices):
    """Deterministic smooth colour field over the rest-pose surface.

    Attached to material points (rest positions), so every rendered view of
    the same surface point sees the same colour.
    """
    x, y, z = np.asarray(rest_vertices, dtype=np.float64).T
    r = 0.55 + 0.30 * np.sin(23.0 * x) + 0.15 * np.cos(9.0 * y)
    g = 0.55 + 0.30 * np.sin(19.0 * y + 1.0) + 0.15 * np.cos(13.0 * z)
    b = 0.55 + 0.30 * np.sin(17.0 * z + 2.0) + 0.15 * np.cos(11.0 * x)
    return np.clip(np.stack([r, g, b], axis=1), 0.0, 1.0)


def render_view(mesh, camera, colors=None):
    """Rasterize a world-space mesh into one camera.

    Returns ``(depth, face_id, bary, color)``: camera-space depth (0 where
    empty), covering face index (-1 where empty), object-space barycentric
    coordinates, and — when per-vertex ``colors`` are given — the
    barycentric-interpolated colour image.
    """
    pts = camera.project(mesh.vertices)
    depth, face_id, bary = kernels.rasterize(pts, mesh.faces,
                                             camera.width, camera.height)
    color = None
    if colors is not None:
        color = np.zeros((camera.height, camera.width, 3))
        hit = face_id >= 0
        corner = np.asarray(colors)[mesh.faces[face_id[hit]]]
        color[hit] = np.einsum("pk,pkc->pc", bary[hit], corner)
    return depth, face_id, bary, color


def exact_flow(faces, render_src, mesh_dst, camera, depth_dst,
               occlusion_tol=0.01):
    """Ground-truth flow from a render of one mesh to the image of another.

    Both meshes share ``faces`` (same topology, different vertex positions)
    and both images live in the same ``camera``.  Each covered source pixel
    names a material point through its face and barycentric coordinates; the
    same combination on ``mesh_dst`` is projected back into the camera.
    Pixels whose target lands outside the image, behind the camera, or hidden
    in the destination render (``depth_dst`` mismatch above ``occlusion_tol``)
    are masked out.
    """
    _, face_id, bary = render_src
    ys, xs = np.nonzero(face_id >= 0)
    corners = mesh_dst.vertices[faces[face_id[ys, xs]]]
    target = np.einsum("pk,pkc->pc", bary[ys, xs], corners)
    u2, v2, z2 = camera.project(target).T
    ok = (z2 > 0) & (u2 >= 0) & (u2 <= camera.width - 1) \
        & (v2 >= 0) & (v2 <= camera.height - 1)
    idx = np.nonzero(ok)[0]
    ui = np.round(u2[idx]).astype(int)
    vi = np.round(v2[idx]).astype(int)
    seen = depth_dst[vi, ui]
    idx = idx[(seen > 0) & (np.abs(seen - z2[idx]) < occlusion_tol)]
    flow = np.zeros((face_id.shape[0], face_id.shape[1], 2), dtype=np.float32)
    mask = np.zeros(face_id.shape, dtype=bool)
    flow[ys[idx], xs[idx], 0] = u2[idx] - xs[idx]
    flow[ys[idx], xs[idx], 1] = v2[idx] - ys[idx]
    mask[ys[idx], xs[idx]] = True
    return FlowField(flow=flow, mask=mask)


def default_base_pose(num_joints):
    """Relaxed standing pose: arms lowered from the T stance, slight bends."""
    rots = np.zeros((num_joints, 3))
    idx = {n: i for i, n in enumerate(JOINT_NAMES)}
    rots[idx["l_shoulder"]] = (0.0, 0.0, -0.35)
    rots[idx["r_shoulder"]] = (0.0, 0.0, 0.35)
    rots[idx["l_elbow"]] = (0.0, 0.0, -0.25)
    rots[idx["r_elbow"]] = (0.0, 0.0, 0.25)
    rots[idx["spine"]] = (0.04, 0.0, 0.0)
    rots[idx["l_knee"]] = (0.06, 0.0, 0.0)
    rots[idx["r_knee"]] = (0.06, 0.0, 0.0)
    return rots


def generate_synthetic_dataset(out_dir, num_frames=8, width=320, height=320,
                               focal=300.0, radius=2.0, sigma_depth=0.002,
                               sigma_joints=0.005, pose_jitter=0.015,
                               prior_std=0.15, beta=(0.4, -0.3),
                               base_pose=None, seed=0,
                               mannequin_resolution=0.015, with_flow=True):
    """Write a complete synthetic capture session to ``out_dir``.

    ``num_frames`` cameras orbit a mannequin with known shape ``beta``; the
    subject holds ``base_pose`` up to a small per-frame jitter of
    ``pose_jitter`` radians on the non-root joints.  Depth gets zero-mean
    Gaussian noise of ``sigma_depth`` metres; joint observations get
    ``sigma_joints``.  Returns the parsed manifest (see :func:`load_manifest`).
    """
    if num_frames < 1:
        raise InvalidSpec("num_frames must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    model = make_mannequin(MannequinSpec(resolution=mannequin_resolution))
    j = model.num_joints
    beta = ShapeParams(np.asarray(beta, dtype=np.float64))
    if base_pose is None:
        base_pose = default_base_pose(j)
    base_pose = np.asarray(base_pose, dtype=np.float64).reshape(j, 3)

    thetas = []
    for _ in range(num_frames):
        rots = base_pose.copy()
        rots[1:] += rng.normal(0.0, pose_jitter, size=(j - 1, 3))
        thetas.append(PoseParams(rots))

    colors = vertex_colors(model.template.vertices)
    meshes = [skin(model, beta, th) for th in thetas]
    lo = meshes[0].vertices.min(axis=0)
    hi = meshes[0].vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    cameras = orbit_cameras(num_frames, center, radius, focal, width, height)

    save_model(out / "model.txt", model)
    prior = GmmPrior(weights=np.ones(1),
                     means=base_pose[1:].reshape(1, -1),
                     chols=prior_std * np.eye(3 * (j - 1))[None])
    save_pose_prior(out / "prior.txt", prior)
    save_mesh(out / "gt_canonical.ply", meshes[0])

    frames = []
    renders = []
    for k in range(num_frames):
        depth, face_id, bary, color = render_view(meshes[k], cameras[k], colors)
        renders.append((depth, face_id, bary))
        noisy = depth.copy()
        hit = depth > 0
        if sigma_depth > 0:
            noisy[hit] = np.maximum(
                depth[hit] + rng.normal(0.0, sigma_depth, hit.sum()), 1e-3)
        joints = posed_joints(model, beta, thetas[k])
        obs = joints + rng.normal(0.0, sigma_joints, joints.shape) \
            if sigma_joints > 0 else joints
        names = {
            "depth": f"frame{k:03d}_depth.pgm",
            "color": f"frame{k:03d}_color.png",
            "camera": f"frame{k:03d}_camera.json",
            "joints": f"frame{k:03d}_joints.txt",
        }
        save_depth_pgm(out / names["depth"], noisy)
        save_png(out / names["color"], color)
        save_camera(out / names["camera"], cameras[k])
        save_joints(out / names["joints"], model.joint_names, obs,
                    np.ones(j), kind="joints3d")
        frames.append(names)

    # Flow for pair (i, j) lives in camera j's image plane: it maps a render
    # of frame i's surface seen from camera j onto frame j's image, which is
    # the form the pairwise-alignment refinement consumes.
    flows = []
    if with_flow and num_frames >= 2:
        ring = [(k, k + 1) for k in range(num_frames - 1)]
        if num_frames > 2:
            ring.append((num_frames - 1, 0))
        for src, dst in ring:
            src_in_dst = render_view(meshes[src], cameras[dst])[:3]
            field = exact_flow(meshes[src].faces, src_in_dst, meshes[dst],
                               cameras[dst], renders[dst][0])
            name = f"flow_{src:03d}_{dst:03d}.flo"
            save_flow(out / name, field)
            flows.append({"src": src, "dst": dst, "path": name})

    with open(out / "gt_params.json", "w", encoding="utf-8") as fh:
        json.dump({
            "beta": beta.coeffs.tolist(),
            "joint_rots": [th.joint_rots.tolist() for th in thetas],
            "root_trans": [th.root_trans.tolist() for th in thetas],
        }, fh, indent=2)

    manifest = {
        "model": "model.txt",
        "prior": "prior.txt",
        "gt_mesh": "gt_canonical.ply",
        "gt_params": "gt_params.json",
        "sigma_depth": sigma_depth,
        "seed": seed,
        "frames": frames,
        "flows": flows,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return load_manifest(out)


def load_manifest(dataset_dir):
    """Read ``manifest.json`` and resolve every path against ``dataset_dir``."""
    root = Path(dataset_dir)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["dir"] = str(root)
    for key in ("model", "prior", "gt_mesh", "gt_params"):
        if manifest.get(key):
            manifest[key] = str(root / manifest[key])
    for frame in manifest["frames"]:
        for key in ("depth", "color", "camera", "joints"):
            frame[key] = str(root / frame[key])
    for flow in manifest.get("flows", []):
        flow["path"] = str(root / flow["path"])
    return manifest
