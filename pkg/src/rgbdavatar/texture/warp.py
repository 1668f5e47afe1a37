"""Image warping fields: sparse lattice optimization and resampling.

A warp field carries one 2D pixel displacement per pixel. Inside the overlap
region it should follow an externally estimated flow; elsewhere it is filled
in by propagating that flow smoothly and shrinking it toward zero far from
the overlap, so a captured image can be softly aligned to the rendered model
before its pixels are committed to the texture.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from ..errors import DimensionMismatch, SingularSystem


@dataclass
class WarpField:
    """Dense per-pixel displacement with its defining masks.

    flow : (H, W, 2) float64 displacement in pixels, zero off the domain.
    overlap : (H, W) bool, pixels carrying an ingested flow estimate.
    outside : (H, W) bool, domain pixels with no estimate (pulled to zero).
    The two masks are disjoint; their union is the solve domain.
    """

    flow: np.ndarray
    overlap: np.ndarray
    outside: np.ndarray

    def __post_init__(self):
        self.flow = np.ascontiguousarray(self.flow, dtype=np.float64)
        self.overlap = np.ascontiguousarray(self.overlap, dtype=bool)
        self.outside = np.ascontiguousarray(self.outside, dtype=bool)
        if self.flow.ndim != 3 or self.flow.shape[2] != 2:
            raise DimensionMismatch(f"flow must be (H, W, 2), got {self.flow.shape}")
        if self.overlap.shape != self.flow.shape[:2] \
                or self.outside.shape != self.flow.shape[:2]:
            raise DimensionMismatch("masks must match the flow image size")
        if (self.overlap & self.outside).any():
            raise DimensionMismatch("overlap and outside masks intersect")
        if not np.isfinite(self.flow).all():
            raise DimensionMismatch("warp displacements must be finite")


def solve_warp(flow_hat, overlap, outside, lambda_s=0.8, lambda_b=1.0):
    """Propagate an overlap-region flow estimate across the full domain.

    Minimizes, over the pixels of ``overlap | outside``,

        sum_overlap |W - flow_hat|^2
        + lambda_s * sum_neighbours |W(p) - W(q)|^2
        + lambda_b * sum_outside |W(p)|^2

    with 4-neighbour smoothness pairs restricted to the domain. Every domain
    pixel carries either a data or a zero anchor, so the system is symmetric
    positive definite; one sparse factorization serves both displacement
    channels. Raises SingularSystem when both masks are empty.
    """
    overlap = np.asarray(overlap, dtype=bool)
    outside = np.asarray(outside, dtype=bool)
    if overlap.shape != outside.shape:
        raise DimensionMismatch("mask shapes differ")
    if (overlap & outside).any():
        raise DimensionMismatch("overlap and outside masks intersect")
    h, w = overlap.shape
    flow_hat = np.asarray(flow_hat, dtype=np.float64)
    if flow_hat.shape != (h, w, 2):
        raise DimensionMismatch(
            f"flow estimate must be ({h}, {w}, 2), got {flow_hat.shape}")
    domain = overlap | outside
    n = int(domain.sum())
    if n == 0:
        raise SingularSystem("both warp masks are empty")

    index = np.full((h, w), -1, dtype=np.int64)
    index[domain] = np.arange(n)

    # unary anchors: unit weight on overlap pixels, lambda_b elsewhere
    anchor = np.where(overlap[domain], 1.0, lambda_b)
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [anchor.copy()]

    # smoothness over right and down neighbour pairs inside the domain
    for pa, pb in (((slice(None), slice(0, w - 1)), (slice(None), slice(1, w))),
                   ((slice(0, h - 1), slice(None)), (slice(1, h), slice(None)))):
        both = domain[pa] & domain[pb]
        ia = index[pa][both]
        ib = index[pb][both]
        ones = np.full(len(ia), lambda_s)
        rows += [ia, ib, ia, ib]
        cols += [ia, ib, ib, ia]
        vals += [ones, ones, -ones, -ones]

    mat = coo_matrix((np.concatenate(vals),
                      (np.concatenate(rows), np.concatenate(cols))),
                     shape=(n, n)).tocsc()
    factor = splu(mat)

    flow = np.zeros((h, w, 2))
    rhs_scale = np.where(overlap[domain], 1.0, 0.0)
    for c in range(2):
        rhs = rhs_scale * flow_hat[..., c][domain]
        flow[..., c][domain] = factor.solve(rhs)
    return WarpField(flow=flow, overlap=overlap, outside=outside)


def warp_energy(field, flow_hat, lambda_s=0.8, lambda_b=1.0):
    """Objective value of ``solve_warp`` for a candidate field."""
    flow = field.flow
    flow_hat = np.asarray(flow_hat, dtype=np.float64)
    domain = field.overlap | field.outside
    e = float((np.linalg.norm((flow - flow_hat)[field.overlap], axis=-1) ** 2).sum())
    e += lambda_b * float((np.linalg.norm(flow[field.outside], axis=-1) ** 2).sum())
    h, w = domain.shape
    for pa, pb in (((slice(None), slice(0, w - 1)), (slice(None), slice(1, w))),
                   ((slice(0, h - 1), slice(None)), (slice(1, h), slice(None)))):
        both = domain[pa] & domain[pb]
        diff = flow[pa][both] - flow[pb][both]
        e += lambda_s * float((np.linalg.norm(diff, axis=-1) ** 2).sum())
    return e


def warp_image(image, field):
    """Resample an image through a warp field: out(p) = image(p + W(p)).

    Uses bilinear interpolation with exact handling of integer coordinates
    (a zero field reproduces the input bit for bit). Returns (warped, valid);
    pixels whose sample position leaves the image are invalid and zero.
    """
    img = np.asarray(image, dtype=np.float64)
    flow = field.flow if isinstance(field, WarpField) else np.asarray(field)
    h, w = img.shape[:2]
    if flow.shape[:2] != (h, w):
        raise DimensionMismatch("warp field size does not match the image")
    ys, xs = np.mgrid[0:h, 0:w]
    u = xs + flow[..., 0]
    v = ys + flow[..., 1]
    valid = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    x0 = np.clip(np.floor(u).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(v).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = u - x0
    fy = v - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    if img.ndim == 3:
        w00, w10, w01, w11 = (wt[..., None] for wt in (w00, w10, w01, w11))
    out = (w00 * img[y0, x0] + w10 * img[y0, x1]
           + w01 * img[y1, x0] + w11 * img[y1, x1])
    mask = valid[..., None] if img.ndim == 3 else valid
    return np.where(mask, out, 0.0), valid
