"""Pure-numpy reference implementations of the hot image kernels.

These mirror the numba versions in ``_numba`` exactly; the package selects
one backend at import time (see ``rgbdavatar.kernels``).
"""

import numpy as np


def bilateral_depth(depth, spatial_sigma, range_sigma):
    """Edge-preserving bilateral filter for a metric depth image.

    Pixels with value 0 are invalid: they stay 0 in the output and never
    contribute to their neighbours' averages.

    Parameters
    ----------
    depth : (H, W) float64 array, metres, 0 = invalid.
    spatial_sigma : spatial kernel width in pixels.
    range_sigma : range kernel width in metres.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    radius = int(np.ceil(2.5 * spatial_sigma))
    valid = depth > 0.0
    acc = np.zeros_like(depth)
    norm = np.zeros_like(depth)
    inv2ss = 1.0 / (2.0 * spatial_sigma * spatial_sigma)
    inv2rs = 1.0 / (2.0 * range_sigma * range_sigma)
    for dy in range(-radius, radius + 1):
        ys_lo, ys_hi = max(0, -dy), min(h, h - dy)
        yd_lo, yd_hi = max(0, dy), min(h, h + dy)
        if ys_lo >= ys_hi:
            continue
        for dx in range(-radius, radius + 1):
            xs_lo, xs_hi = max(0, -dx), min(w, w - dx)
            xd_lo, xd_hi = max(0, dx), min(w, w + dx)
            if xs_lo >= xs_hi:
                continue
            d_nb = depth[yd_lo:yd_hi, xd_lo:xd_hi]
            v_nb = valid[yd_lo:yd_hi, xd_lo:xd_hi]
            d_ct = depth[ys_lo:ys_hi, xs_lo:xs_hi]
            diff = d_nb - d_ct
            wgt = np.exp(-(dx * dx + dy * dy) * inv2ss - diff * diff * inv2rs)
            wgt = np.where(v_nb, wgt, 0.0)
            acc[ys_lo:ys_hi, xs_lo:xs_hi] += wgt * d_nb
            norm[ys_lo:ys_hi, xs_lo:xs_hi] += wgt
    out = np.zeros_like(depth)
    np.divide(acc, norm, out=out, where=(norm > 0.0) & valid)
    return out


def rasterize(pts, faces, width, height):
    """Rasterize projected triangles with a z-buffer.

    Parameters
    ----------
    pts : (V, 3) float64 array of (u_px, v_px, camera_depth) per vertex.
    faces : (F, 3) int array.
    width, height : output image size.

    Returns
    -------
    depth : (H, W) float64, camera depth at each covered pixel centre, 0 empty.
    face_id : (H, W) int32, covering face index, -1 empty.
    bary : (H, W, 3) float64, perspective-correct barycentric coordinates.

    Depth is interpolated via 1/z (projectively correct), so back-projecting
    a covered pixel centre lands on the triangle's supporting plane.
    """
    pts = np.asarray(pts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    depth = np.zeros((height, width), dtype=np.float64)
    face_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    for fi in range(faces.shape[0]):
        i0, i1, i2 = faces[fi]
        u0, v0, z0 = pts[i0]
        u1, v1, z1 = pts[i1]
        u2, v2, z2 = pts[i2]
        if z0 <= 1e-9 or z1 <= 1e-9 or z2 <= 1e-9:
            continue
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        sgn = 1.0 if area > 0.0 else -1.0
        inv_area = 1.0 / (area * sgn)
        # pixel centres sit at integer coordinates, matching the projection
        # convention cx = (width - 1) / 2
        x_lo = max(0, int(np.ceil(min(u0, u1, u2))))
        x_hi = min(width - 1, int(np.floor(max(u0, u1, u2))))
        y_lo = max(0, int(np.ceil(min(v0, v1, v2))))
        y_hi = min(height - 1, int(np.floor(max(v0, v1, v2))))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1, dtype=np.float64)
        py = np.arange(y_lo, y_hi + 1, dtype=np.float64)
        pxg, pyg = np.meshgrid(px, py)
        w0 = ((u2 - u1) * (pyg - v1) - (v2 - v1) * (pxg - u1)) * sgn
        w1 = ((u0 - u2) * (pyg - v2) - (v0 - v2) * (pxg - u2)) * sgn
        w2 = ((u1 - u0) * (pyg - v0) - (v1 - v0) * (pxg - u0)) * sgn
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        b0 = w0 * inv_area
        b1 = w1 * inv_area
        b2 = w2 * inv_area
        inv_z = b0 / z0 + b1 / z1 + b2 / z2
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 1.0 / inv_z
        sub_d = depth[y_lo:y_hi + 1, x_lo:x_hi + 1]
        closer = inside & (inv_z > 0.0) & ((sub_d == 0.0) | (z < sub_d))
        if not closer.any():
            continue
        pb0 = (b0 / z0) / inv_z
        pb1 = (b1 / z1) / inv_z
        pb2 = (b2 / z2) / inv_z
        np.copyto(sub_d, z, where=closer)
        sub_f = face_id[y_lo:y_hi + 1, x_lo:x_hi + 1]
        np.copyto(sub_f, np.int32(fi), where=closer)
        sub_b = bary[y_lo:y_hi + 1, x_lo:x_hi + 1]
        np.copyto(sub_b[:, :, 0], pb0, where=closer)
        np.copyto(sub_b[:, :, 1], pb1, where=closer)
        np.copyto(sub_b[:, :, 2], pb2, where=closer)
    return depth, face_id, bary
