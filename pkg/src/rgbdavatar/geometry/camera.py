"""Pinhole camera model and depth-image back-projection."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, EmptyScan, InvalidSpec
from .mesh import TriMesh, compute_normals


@dataclass
class Camera:
    """Pinhole intrinsics plus a camera-to-world rigid pose.

    A camera-frame point x maps to the world as ``R @ x + t``; the camera
    looks down its +z axis, +x right, +y down (image row direction).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.ascontiguousarray(self.rotation, dtype=np.float64)
        self.translation = np.ascontiguousarray(self.translation, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidSpec("focal lengths must be positive")
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise DimensionMismatch("pose must be a 3x3 rotation and 3-vector")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise InvalidSpec("camera rotation is not orthonormal")

    def world_to_cam(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - self.translation) @ self.rotation

    def cam_to_world(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def project(self, pts_world):
        """Project world points; returns (u, v, depth) per point.

        Points behind the camera get depth <= 0 and meaningless pixels.
        """
        pc = self.world_to_cam(pts_world)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[..., 0] / z + self.cx
            v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v, z], axis=-1)

    def view_dir_world(self):
        """Unit vector of the camera's optical axis in world coordinates."""
        return self.rotation @ np.array([0.0, 0.0, 1.0])

    def center_world(self):
        return self.translation.copy()


@dataclass
class PartialScan:
    """One frame's observed surface piece plus its source images."""

    mesh: TriMesh
    camera: Camera
    depth: np.ndarray | None = None
    color_image: np.ndarray | None = None
    pixel_coords: np.ndarray | None = None  # (V, 2) source pixel (u, v)
    joints: "object | None" = None  # JointObservation, attached by the pipeline


def backproject(depth, camera, color_image=None, edge_len_max=0.05):
    """Lift a depth image to a triangulated surface piece in world space.

    Each valid pixel (depth > 0) becomes a vertex at
    ``((u - cx) d / fx, (v - cy) d / fy, d)`` in the camera frame, transformed
    by the camera pose. Adjacent valid pixels are triangulated; any triangle
    with an edge longer than ``edge_len_max`` (depth discontinuity) is
    dropped. Raises EmptyScan when no pixel is valid.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (camera.height, camera.width):
        raise DimensionMismatch(
            f"depth {depth.shape} does not match camera "
            f"({camera.height}, {camera.width})")
    valid = depth > 0.0
    if not valid.any():
        raise EmptyScan("no valid depth pixels")
    h, w = depth.shape
    vid = np.full((h, w), -1, dtype=np.int64)
    vy, vx = np.nonzero(valid)
    vid[vy, vx] = np.arange(len(vy))
    d = depth[vy, vx]
    x_cam = (vx - camera.cx) * d / camera.fx
    y_cam = (vy - camera.cy) * d / camera.fy
    pts_cam = np.stack([x_cam, y_cam, d], axis=1)
    pts_world = camera.cam_to_world(pts_cam)

    # two triangles per fully-valid 2x2 block, wound to face the camera
    tris = []
    q00 = vid[:-1, :-1]
    q01 = vid[1:, :-1]   # (v+1, u)
    q10 = vid[:-1, 1:]   # (v, u+1)
    q11 = vid[1:, 1:]
    all4 = (q00 >= 0) & (q01 >= 0) & (q10 >= 0) & (q11 >= 0)
    if all4.any():
        a, b, c, e = q00[all4], q01[all4], q11[all4], q10[all4]
        tris.append(np.stack([a, b, c], axis=1))
        tris.append(np.stack([a, c, e], axis=1))
    faces = np.concatenate(tris, axis=0) if tris else np.zeros((0, 3), np.int64)

    if len(faces):
        p = pts_world
        e0 = np.linalg.norm(p[faces[:, 1]] - p[faces[:, 0]], axis=1)
        e1 = np.linalg.norm(p[faces[:, 2]] - p[faces[:, 1]], axis=1)
        e2 = np.linalg.norm(p[faces[:, 0]] - p[faces[:, 2]], axis=1)
        keep = (e0 <= edge_len_max) & (e1 <= edge_len_max) & (e2 <= edge_len_max)
        faces = faces[keep]

    colors = None
    if color_image is not None:
        img = np.asarray(color_image, dtype=np.float64)
        colors = img[vy, vx]
    mesh = TriMesh(pts_world, faces, colors=colors)
    mesh = compute_normals(mesh)
    return PartialScan(
        mesh=mesh,
        camera=camera,
        depth=depth,
        color_image=None if color_image is None else np.asarray(color_image),
        pixel_coords=np.stack([vx.astype(np.float64), vy.astype(np.float64)], axis=1),
    )
