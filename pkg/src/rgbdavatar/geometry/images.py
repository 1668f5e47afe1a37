"""Image and per-frame capture file formats.

Depth travels as 16-bit binary PGM in millimetres; colour as PNG. Camera
intrinsics/pose and joint observations are small text files.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .. import kernels
from ..errors import ParseError, UnsupportedFormat
from .camera import Camera


def smooth_depth(depth, spatial_sigma=3.0, range_sigma=0.02):
    """Bilateral-filter a metric depth image.

    Invalid pixels (value 0) are preserved as 0 and excluded from every
    neighbourhood average, so holes neither grow nor bleed depth.
    """
    return kernels.bilateral_depth(
        np.ascontiguousarray(depth, dtype=np.float64),
        float(spatial_sigma), float(range_sigma))


def save_png(path, image):
    """Write a float RGB image in [0, 1] (or uint8) as PNG."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(Path(path))


def load_png(path):
    """Read a PNG as float64 RGB in [0, 1]."""
    img = Image.open(Path(path)).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_depth_pgm(path, depth_m):
    """Write metric depth as binary 16-bit PGM in millimetres (0 = invalid)."""
    mm = np.clip(np.round(np.asarray(depth_m) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def load_depth_pgm(path):
    """Read a 16-bit PGM of millimetres back to float64 metres."""
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width/height, maxval; separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(path, 1, "truncated PGM header")
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ParseError(path, 1, f"bad PGM header: {exc}") from exc
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        raw = np.frombuffer(data, dtype=dtype, offset=pos, count=w * h)
        mm = raw.reshape(h, w).astype(np.float64)
    elif magic == b"P2":
        vals = data[pos:].split()
        if len(vals) < w * h:
            raise ParseError(path, 1, "truncated P2 pixel data")
        mm = np.array([float(v) for v in vals[:w * h]]).reshape(h, w)
    else:
        raise UnsupportedFormat(f"not a PGM file: magic {magic!r}")
    return mm / 1000.0


def save_camera(path, camera):
    pose = np.concatenate(
        [camera.rotation, camera.translation[:, None]], axis=1)
    payload = {
        "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        "width": camera.width, "height": camera.height,
        "pose": [float(x) for x in pose.reshape(-1)],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_camera(path):
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"bad camera file: {exc.msg}") from exc
    try:
        pose = np.asarray(payload["pose"], dtype=np.float64).reshape(3, 4)
        return Camera(
            fx=float(payload["fx"]), fy=float(payload["fy"]),
            cx=float(payload["cx"]), cy=float(payload["cy"]),
            width=int(payload["width"]), height=int(payload["height"]),
            rotation=pose[:, :3], translation=pose[:, 3],
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(path, 1, f"bad camera file: {exc}") from exc


def save_joints(path, names, coords, weights, kind="joints3d"):
    """Write a joint observation file.

    kind is 'joints3d' (world-space x y z) or 'joints2d' (pixel u v); each
    line carries the joint name, coordinates and a confidence weight.
    """
    coords = np.asarray(coords, dtype=np.float64)
    dim = 3 if kind == "joints3d" else 2
    lines = [f"{kind} {len(names)}"]
    for name, c, w in zip(names, coords, weights):
        nums = " ".join("%.9g" % x for x in c[:dim])
        lines.append(f"{name} {nums} %.9g" % w)
    Path(path).write_text("\n".join(lines) + "\n")


def load_joints(path):
    """Read a joint file; returns (kind, names, coords, weights)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty joints file")
    head = lines[0].split()
    if len(head) != 2 or head[0] not in ("joints3d", "joints2d"):
        raise ParseError(path, 1, "expected 'joints3d N' or 'joints2d N' header")
    kind = head[0]
    dim = 3 if kind == "joints3d" else 2
    try:
        count = int(head[1])
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from exc
    names, coords, weights = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 2:
            raise ParseError(path, ln, f"expected name + {dim} coords + weight")
        try:
            names.append(parts[0])
            coords.append([float(x) for x in parts[1:1 + dim]])
            weights.append(float(parts[-1]))
        except ValueError as exc:
            raise ParseError(path, ln, str(exc)) from exc
    if len(names) != count:
        raise ParseError(path, len(lines), f"expected {count} joints, got {len(names)}")
    return kind, names, np.asarray(coords), np.asarray(weights)


def bilinear_sample(image, uv):
    """Sample an (H, W[, C]) image at float pixel coords; returns (values, valid).

    Coordinates are (u, v) with (0, 0) at the centre of the top-left pixel.
    Samples outside the image are invalid (value 0).
    """
    img = np.asarray(image, dtype=np.float64)
    uv = np.asarray(uv, dtype=np.float64)
    h, w = img.shape[:2]
    u, v = uv[..., 0], uv[..., 1]
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx, fy = u - x0, v - y0
    valid = (x0 >= 0) & (y0 >= 0) & (x0 + 1 <= w - 1) & (y0 + 1 <= h - 1)
    x0c = np.clip(x0, 0, w - 2)
    y0c = np.clip(y0, 0, h - 2)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    if img.ndim == 3:
        w00, w10, w01, w11 = (w[..., None] for w in (w00, w10, w01, w11))
    out = (w00 * img[y0c, x0c] + w10 * img[y0c, x0c + 1]
           + w01 * img[y0c + 1, x0c] + w11 * img[y0c + 1, x0c + 1])
    if img.ndim == 3:
        out = np.where(valid[..., None], out, 0.0)
    else:
        out = np.where(valid, out, 0.0)
    return out, valid
