"""Dense 2D flow ingestion and flow-guided correspondence refinement.

Flow fields are consumed, never estimated: an external optical-flow method
(or the synthetic generator) supplies per-pixel displacements from a render
of the deformed source mesh to the target frame's image. Valid flow pixels
are back-projected onto both meshes through depth renders and appended to
the correspondence set with ``flow`` provenance.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, ParseError
from ..kernels import rasterize
from .correspond import CorrespondenceSet

_MAGIC = b"RGBDAFLW"


@dataclass
class FlowField:
    """Per-pixel displacement image with a validity mask."""

    flow: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.flow.ndim != 3 or self.flow.shape[2] != 2:
            raise DimensionMismatch(
                f"flow must be (H, W, 2), got {self.flow.shape}")
        if self.mask.shape != self.flow.shape[:2]:
            raise DimensionMismatch(
                f"mask shape {self.mask.shape} does not match "
                f"flow {self.flow.shape[:2]}")

    @property
    def shape(self):
        return self.mask.shape

    @classmethod
    def zero(cls, height, width):
        return cls(np.zeros((height, width, 2), np.float32),
                   np.ones((height, width), bool))


def save_flow(path, field):
    """Write a flow field as magic + dimensions + float32 data + mask."""
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(np.ascontiguousarray(field.flow, np.float32).tobytes())
        fh.write(np.ascontiguousarray(field.mask, np.uint8).tobytes())


def load_flow(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ParseError(path, 0, "bad flow file magic")
        w, h = struct.unpack("<II", fh.read(8))
        flow = np.frombuffer(fh.read(h * w * 2 * 4), dtype="<f4")
        mask = np.frombuffer(fh.read(h * w), dtype=np.uint8)
    if flow.size != h * w * 2 or mask.size != h * w:
        raise ParseError(path, 0, "truncated flow file")
    return FlowField(flow.reshape(h, w, 2).copy(),
                     mask.reshape(h, w).astype(bool))


def render_vertex_map(mesh, camera, width, height):
    """Depth render plus the nearest visible vertex id per pixel.

    Returns (depth, vertex_id) images; vertex_id is -1 where nothing is
    visible. The visible vertex is the covering face's corner with the
    largest barycentric coordinate.
    """
    pts = camera.project(mesh.vertices)
    depth, face_id, bary = rasterize(pts, mesh.faces, width, height)
    vid = np.full((height, width), -1, dtype=np.int64)
    hit = face_id >= 0
    corner = np.argmax(bary[hit], axis=1)
    vid[hit] = mesh.faces[face_id[hit], corner]
    return depth, vid


def refine_with_flow(deformed, scan_j, flow, camera):
    """Turn valid flow pixels into vertex correspondences.

    ``deformed`` is the source scan already deformed toward frame j; the
    flow maps its render (at ``camera``) to frame j's image. Both endpoints
    are back-projected through depth renders to the nearest visible vertex.
    Returns a CorrespondenceSet with ``flow`` provenance; it is empty (never
    an error) when no valid pixel survives.
    """
    h, w = flow.shape
    _, vid_src = render_vertex_map(deformed, camera, w, h)
    _, vid_dst = render_vertex_map(scan_j, camera, w, h)

    vv, uu = np.nonzero(flow.mask & (vid_src >= 0))
    if len(vv) == 0:
        return CorrespondenceSet.empty()
    du = flow.flow[vv, uu, 0]
    dv = flow.flow[vv, uu, 1]
    u2 = np.rint(uu + du).astype(np.int64)
    v2 = np.rint(vv + dv).astype(np.int64)
    inside = (u2 >= 0) & (u2 < w) & (v2 >= 0) & (v2 < h)
    vv, uu, u2, v2 = vv[inside], uu[inside], u2[inside], v2[inside]
    dst = vid_dst[v2, u2]
    ok = dst >= 0
    src = vid_src[vv[ok], uu[ok]]
    dst = dst[ok]
    if len(src) == 0:
        return CorrespondenceSet.empty()
    # collapse duplicate vertex pairs produced by neighbouring pixels
    pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
    n = len(pairs)
    return CorrespondenceSet(pairs[:, 0], pairs[:, 1], np.ones(n),
                             np.full(n, "flow"))
