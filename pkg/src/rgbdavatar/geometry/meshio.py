"""ASCII OBJ and PLY mesh readers/writers.

Both writers emit 9 significant digits so geometry survives a round trip.
Malformed files raise ParseError carrying the 1-based line number.
"""

from pathlib import Path

import numpy as np

from ..errors import ParseError, UnsupportedFormat
from .mesh import TriMesh

_FMT = "%.9g"


def save_mesh(path, mesh):
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        _save_obj(path, mesh)
    elif ext == ".ply":
        _save_ply(path, mesh)
    else:
        raise UnsupportedFormat(f"cannot write mesh format {ext!r}")


def load_mesh(path):
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        return _load_obj(path)
    if ext == ".ply":
        return _load_ply(path)
    raise UnsupportedFormat(f"cannot read mesh format {ext!r}")


def _save_obj(path, mesh):
    lines = []
    has_color = mesh.colors is not None
    for i, v in enumerate(mesh.vertices):
        rec = "v " + " ".join(_FMT % x for x in v)
        if has_color:
            rec += " " + " ".join(_FMT % c for c in mesh.colors[i])
        lines.append(rec)
    if mesh.uv is not None:
        for t in mesh.uv:
            lines.append("vt " + " ".join(_FMT % x for x in t))
    if mesh.normals is not None:
        for n in mesh.normals:
            lines.append("vn " + " ".join(_FMT % x for x in n))
    has_uv = mesh.uv is not None
    has_n = mesh.normals is not None
    for f in mesh.faces:
        corners = []
        for vi in f:
            k = vi + 1
            if has_uv and has_n:
                corners.append(f"{k}/{k}/{k}")
            elif has_uv:
                corners.append(f"{k}/{k}")
            elif has_n:
                corners.append(f"{k}//{k}")
            else:
                corners.append(str(k))
        lines.append("f " + " ".join(corners))
    path.write_text("\n".join(lines) + "\n")


def _load_obj(path):
    verts, colors, uvs, normals, faces = [], [], [], [], []
    face_uv_idx, face_n_idx = [], []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) not in (4, 7):
                        raise ValueError("expected 3 or 6 numbers")
                    verts.append([float(x) for x in parts[1:4]])
                    if len(parts) == 7:
                        colors.append([float(x) for x in parts[4:7]])
                elif tag == "vt":
                    uvs.append([float(x) for x in parts[1:3]])
                elif tag == "vn":
                    normals.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    if len(parts) < 4:
                        raise ValueError("face needs at least 3 corners")
                    vi, ti, ni = [], [], []
                    for corner in parts[1:]:
                        fields = corner.split("/")
                        vi.append(int(fields[0]) - 1)
                        ti.append(int(fields[1]) - 1
                                  if len(fields) > 1 and fields[1] else -1)
                        ni.append(int(fields[2]) - 1
                                  if len(fields) > 2 and fields[2] else -1)
                    # fan-triangulate polygons
                    for k in range(1, len(vi) - 1):
                        faces.append([vi[0], vi[k], vi[k + 1]])
                        face_uv_idx.append([ti[0], ti[k], ti[k + 1]])
                        face_n_idx.append([ni[0], ni[k], ni[k + 1]])
            except (ValueError, IndexError) as exc:
                raise ParseError(path, line_no, f"bad OBJ record: {exc}") from exc
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = (np.asarray(faces, dtype=np.int64).reshape(-1, 3)
         if faces else np.zeros((0, 3), np.int64))
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise ParseError(path, 0, "face index out of range")
    col = np.asarray(colors, dtype=np.float64) if len(colors) == len(verts) else None
    uv_arr = None
    if uvs:
        uv_src = np.asarray(uvs, dtype=np.float64)
        uv_arr = np.zeros((len(v), 2))
        if face_uv_idx:
            fuv = np.asarray(face_uv_idx, dtype=np.int64)
            ok = fuv >= 0
            uv_arr[f[ok]] = uv_src[fuv[ok]]
        elif len(uv_src) == len(v):
            uv_arr = uv_src
    n_arr = None
    if normals:
        n_src = np.asarray(normals, dtype=np.float64)
        n_arr = np.zeros((len(v), 3))
        if face_n_idx:
            fn = np.asarray(face_n_idx, dtype=np.int64)
            ok = fn >= 0
            n_arr[f[ok]] = n_src[fn[ok]]
        elif len(n_src) == len(v):
            n_arr = n_src
    return TriMesh(v, f, normals=n_arr, colors=col, uv=uv_arr)


def _save_ply(path, mesh):
    has_n = mesh.normals is not None
    has_c = mesh.colors is not None
    header = ["ply", "format ascii 1.0",
              f"element vertex {mesh.num_vertices}",
              "property double x", "property double y", "property double z"]
    if has_n:
        header += ["property double nx", "property double ny", "property double nz"]
    if has_c:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {mesh.num_faces}",
               "property list uchar int vertex_indices", "end_header"]
    lines = list(header)
    for i, v in enumerate(mesh.vertices):
        rec = " ".join(_FMT % x for x in v)
        if has_n:
            rec += " " + " ".join(_FMT % x for x in mesh.normals[i])
        if has_c:
            c = np.clip(np.round(mesh.colors[i] * 255.0), 0, 255).astype(int)
            rec += f" {c[0]} {c[1]} {c[2]}"
        lines.append(rec)
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    path.write_text("\n".join(lines) + "\n")


def _load_ply(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, 1, "not a PLY file")
    n_vert = n_face = 0
    vert_props = []
    cur_elem = None
    body_start = None
    for ln, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise UnsupportedFormat("only ASCII PLY is supported")
        elif tok[0] == "element":
            cur_elem = tok[1]
            if cur_elem == "vertex":
                n_vert = int(tok[2])
            elif cur_elem == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and cur_elem == "vertex":
            if tok[1] == "list":
                raise ParseError(path, ln, "list property on vertex element")
            vert_props.append((tok[2], tok[1]))
        elif tok[0] == "end_header":
            body_start = ln
            break
    if body_start is None:
        raise ParseError(path, len(lines), "missing end_header")
    names = [p[0] for p in vert_props]
    for ax in ("x", "y", "z"):
        if ax not in names:
            raise ParseError(path, body_start, f"vertex property {ax!r} missing")
    verts = np.zeros((n_vert, 3))
    normals = np.zeros((n_vert, 3)) if "nx" in names else None
    colors = np.zeros((n_vert, 3)) if "red" in names else None
    idx = {name: k for k, name in enumerate(names)}
    row = body_start  # 0-based index of the first body line == header line count
    for i in range(n_vert):
        ln = row + i
        if ln >= len(lines):
            raise ParseError(path, len(lines), "unexpected end of vertex data")
        vals = lines[ln].split()
        if len(vals) < len(names):
            raise ParseError(path, ln + 1, "short vertex record")
        try:
            verts[i] = [float(vals[idx[a]]) for a in ("x", "y", "z")]
            if normals is not None:
                normals[i] = [float(vals[idx[a]]) for a in ("nx", "ny", "nz")]
            if colors is not None:
                colors[i] = [float(vals[idx[a]]) / 255.0
                             for a in ("red", "green", "blue")]
        except ValueError as exc:
            raise ParseError(path, ln + 1, f"bad vertex value: {exc}") from exc
    faces = np.zeros((n_face, 3), np.int64)
    for i in range(n_face):
        ln = row + n_vert + i
        if ln >= len(lines):
            raise ParseError(path, len(lines), "unexpected end of face data")
        vals = lines[ln].split()
        try:
            cnt = int(vals[0])
            if cnt != 3 or len(vals) < 4:
                raise ValueError("only triangles are supported")
            faces[i] = [int(x) for x in vals[1:4]]
        except ValueError as exc:
            raise ParseError(path, ln + 1, f"bad face record: {exc}") from exc
    if len(faces) and (faces.min() < 0 or faces.max() >= n_vert):
        raise ParseError(path, row + n_vert + 1, "face index out of range")
    return TriMesh(verts, faces, normals=normals, colors=colors)
