"""Axis-angle rotation utilities: exponential map, derivative, wrapping."""

import numpy as np

_EPS = 1e-8


def wrap_axis_angle(theta):
    """Wrap a (J, 3) or (3,) axis-angle array so every norm is < pi.

    Uses theta -> theta * (1 - 2*pi/|theta|), applied until the norm drops
    below pi; the rotation itself is unchanged.
    """
    th = np.array(theta, dtype=np.float64, copy=True)
    flat = th.reshape(-1, 3)
    for i in range(flat.shape[0]):
        for _ in range(8):
            n = np.linalg.norm(flat[i])
            if n < np.pi:
                break
            if abs(n - np.pi) < 1e-12:
                # exactly pi has two equivalent encodings; nudge inside
                flat[i] *= (np.pi - 1e-12) / n
                break
            flat[i] *= 1.0 - 2.0 * np.pi / n
    return th.reshape(np.shape(theta))


def skew(v):
    """Cross-product matrix [v]_x."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(v):
    """Rotation matrix for axis-angle vector v (exact identity at v = 0)."""
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle == 0.0:
        return np.eye(3)
    if angle < _EPS:
        # first-order expansion keeps the derivative continuous
        return np.eye(3) + skew(v)
    axis = v / angle
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rodrigues_batch(vs):
    """(J, 3) axis-angle stack -> (J, 3, 3) rotation stack."""
    vs = np.asarray(vs, dtype=np.float64)
    return np.stack([rodrigues(v) for v in vs], axis=0)


def drodrigues(v):
    """Derivative of R(v) w.r.t. each component of v.

    Returns (3, 3, 3): out[a] = dR/dv_a. Uses the closed form
    dR/dv_a = (v_a [v]_x + [v x (I - R) e_a]_x) / |v|^2 @ R,
    falling back to [e_a]_x near zero.
    """
    v = np.asarray(v, dtype=np.float64)
    angle2 = float(v @ v)
    out = np.zeros((3, 3, 3))
    if angle2 < _EPS * _EPS:
        for a in range(3):
            e = np.zeros(3)
            e[a] = 1.0
            out[a] = skew(e)
        return out
    r = rodrigues(v)
    for a in range(3):
        e = np.zeros(3)
        e[a] = 1.0
        w = (v[a] * v + np.cross(v, (np.eye(3) - r) @ e)) / angle2
        out[a] = skew(w) @ r
    return out
