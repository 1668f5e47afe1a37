"""Numba-compiled image kernels (same contracts as ``_numpy``)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def bilateral_depth(depth, spatial_sigma, range_sigma):
    h, w = depth.shape
    radius = int(math.ceil(2.5 * spatial_sigma))
    inv2ss = 1.0 / (2.0 * spatial_sigma * spatial_sigma)
    inv2rs = 1.0 / (2.0 * range_sigma * range_sigma)
    out = np.zeros_like(depth)
    for y in range(h):
        for x in range(w):
            d0 = depth[y, x]
            if d0 <= 0.0:
                continue
            acc = 0.0
            norm = 0.0
            y_lo = max(0, y - radius)
            y_hi = min(h - 1, y + radius)
            x_lo = max(0, x - radius)
            x_hi = min(w - 1, x + radius)
            for yy in range(y_lo, y_hi + 1):
                for xx in range(x_lo, x_hi + 1):
                    d = depth[yy, xx]
                    if d <= 0.0:
                        continue
                    dy = yy - y
                    dx = xx - x
                    diff = d - d0
                    wgt = math.exp(-(dx * dx + dy * dy) * inv2ss
                                   - diff * diff * inv2rs)
                    acc += wgt * d
                    norm += wgt
            if norm > 0.0:
                out[y, x] = acc / norm
    return out


@njit(cache=True)
def rasterize(pts, faces, width, height):
    depth = np.zeros((height, width), dtype=np.float64)
    face_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    for fi in range(faces.shape[0]):
        i0 = faces[fi, 0]
        i1 = faces[fi, 1]
        i2 = faces[fi, 2]
        u0, v0, z0 = pts[i0, 0], pts[i0, 1], pts[i0, 2]
        u1, v1, z1 = pts[i1, 0], pts[i1, 1], pts[i1, 2]
        u2, v2, z2 = pts[i2, 0], pts[i2, 1], pts[i2, 2]
        if z0 <= 1e-9 or z1 <= 1e-9 or z2 <= 1e-9:
            continue
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        sgn = 1.0 if area > 0.0 else -1.0
        inv_area = 1.0 / (area * sgn)
        u_min = min(u0, min(u1, u2))
        u_max = max(u0, max(u1, u2))
        v_min = min(v0, min(v1, v2))
        v_max = max(v0, max(v1, v2))
        # pixel centres sit at integer coordinates, matching the projection
        # convention cx = (width - 1) / 2
        x_lo = max(0, int(math.ceil(u_min)))
        x_hi = min(width - 1, int(math.floor(u_max)))
        y_lo = max(0, int(math.ceil(v_min)))
        y_hi = min(height - 1, int(math.floor(v_max)))
        for y in range(y_lo, y_hi + 1):
            py = float(y)
            for x in range(x_lo, x_hi + 1):
                px = float(x)
                w0 = ((u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)) * sgn
                if w0 < 0.0:
                    continue
                w1 = ((u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)) * sgn
                if w1 < 0.0:
                    continue
                w2 = ((u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)) * sgn
                if w2 < 0.0:
                    continue
                b0 = w0 * inv_area
                b1 = w1 * inv_area
                b2 = w2 * inv_area
                inv_z = b0 / z0 + b1 / z1 + b2 / z2
                if inv_z <= 0.0:
                    continue
                z = 1.0 / inv_z
                d_cur = depth[y, x]
                if d_cur != 0.0 and z >= d_cur:
                    continue
                depth[y, x] = z
                face_id[y, x] = fi
                bary[y, x, 0] = (b0 / z0) / inv_z
                bary[y, x, 1] = (b1 / z1) / inv_z
                bary[y, x, 2] = (b2 / z2) / inv_z
    return depth, face_id, bary
