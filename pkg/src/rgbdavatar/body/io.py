"""Text container formats for body models and pose priors."""

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import ParseError, UnsupportedFormat
from ..geometry.mesh import TriMesh, compute_normals
from .model import BodyModel
from .prior import GmmPrior

_FMT = "%.9g"


def _nums(vals):
    return " ".join(_FMT % x for x in vals)


def save_model(path, model):
    """Write a BodyModel to a versioned ASCII container."""
    out = [f"bodymodel 1"]
    out.append(f"joints {model.num_joints}")
    names = model.joint_names or [f"j{i}" for i in range(model.num_joints)]
    out.append("names " + " ".join(names))
    out.append("parents " + " ".join(str(p) for p in model.parents))
    t = model.template
    out.append(f"vertices {t.num_vertices}")
    has_color = t.colors is not None
    for i in range(t.num_vertices):
        rec = _nums(t.vertices[i])
        if has_color:
            rec += " " + _nums(t.colors[i])
        out.append("v " + rec)
    out.append(f"faces {t.num_faces}")
    for f in t.faces:
        out.append(f"f {f[0]} {f[1]} {f[2]}")
    s = model.num_shape
    out.append(f"shape_basis {s}")
    for c in range(s):
        for i in range(t.num_vertices):
            out.append(f"sb {c} {i} " + _nums(model.shape_basis[i, :, c]))
    q = model.pose_basis.shape[2]
    out.append(f"pose_basis {q}")
    if q:
        for c in range(q):
            col = model.pose_basis[:, :, c]
            nz = np.flatnonzero(np.abs(col).sum(axis=1))
            for i in nz:
                out.append(f"pb {c} {i} " + _nums(col[i]))
        out.append("pb_end")
    reg = model.joint_regressor.tocoo()
    out.append(f"regressor {reg.nnz}")
    for r, c, v in zip(reg.row, reg.col, reg.data):
        out.append(f"r {r} {c} " + _FMT % v)
    wsp = sp.coo_matrix(model.skin_weights)
    out.append(f"weights {wsp.nnz}")
    for r, c, v in zip(wsp.row, wsp.col, wsp.data):
        out.append(f"w {r} {c} " + _FMT % v)
    Path(path).write_text("\n".join(out) + "\n")


def load_model(path):
    """Read a BodyModel container written by :func:`save_model`."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def take(expect=None):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(path, len(lines), "unexpected end of file")
        parts = lines[pos].split()
        pos += 1
        if expect is not None and (not parts or parts[0] != expect):
            raise ParseError(path, pos, f"expected {expect!r} record")
        return parts

    head = take()
    if head[:2] != ["bodymodel", "1"]:
        raise UnsupportedFormat("not a bodymodel v1 container")
    try:
        j_count = int(take("joints")[1])
        names = take("names")[1:]
        parents = np.array([int(x) for x in take("parents")[1:]])
        v_count = int(take("vertices")[1])
        verts = np.zeros((v_count, 3))
        colors = None
        for i in range(v_count):
            rec = take("v")
            verts[i] = [float(x) for x in rec[1:4]]
            if len(rec) == 7:
                if colors is None:
                    colors = np.zeros((v_count, 3))
                colors[i] = [float(x) for x in rec[4:7]]
        f_count = int(take("faces")[1])
        faces = np.zeros((f_count, 3), np.int64)
        for i in range(f_count):
            faces[i] = [int(x) for x in take("f")[1:4]]
        s = int(take("shape_basis")[1])
        shape_basis = np.zeros((v_count, 3, s))
        for _ in range(s * v_count):
            rec = take("sb")
            c, i = int(rec[1]), int(rec[2])
            shape_basis[i, :, c] = [float(x) for x in rec[3:6]]
        q = int(take("pose_basis")[1])
        pose_basis = np.zeros((v_count, 3, q))
        if q:
            while True:
                rec = take()
                if rec[0] == "pb_end":
                    break
                if rec[0] != "pb":
                    raise ParseError(path, pos, "expected 'pb' record")
                c, i = int(rec[1]), int(rec[2])
                pose_basis[i, :, c] = [float(x) for x in rec[3:6]]
        nnz = int(take("regressor")[1])
        rr, rc, rv = [], [], []
        for _ in range(nnz):
            rec = take("r")
            rr.append(int(rec[1]))
            rc.append(int(rec[2]))
            rv.append(float(rec[3]))
        regressor = sp.csr_matrix((rv, (rr, rc)), shape=(j_count, v_count))
        nnz = int(take("weights")[1])
        weights = np.zeros((v_count, j_count))
        for _ in range(nnz):
            rec = take("w")
            weights[int(rec[1]), int(rec[2])] = float(rec[3])
    except (ValueError, IndexError) as exc:
        raise ParseError(path, pos, f"bad model record: {exc}") from exc
    mesh = compute_normals(TriMesh(verts, faces, colors=colors))
    return BodyModel(
        template=mesh, shape_basis=shape_basis, pose_basis=pose_basis,
        joint_regressor=regressor, skin_weights=weights, parents=parents,
        joint_names=names,
    )


def save_pose_prior(path, prior):
    """Write a GmmPrior as ASCII (weights, means, lower Cholesky factors)."""
    k, d = prior.means.shape
    out = [f"gmmprior 1", f"dim {d}", f"components {k}"]
    for i in range(k):
        out.append("weight " + _FMT % prior.weights[i])
        out.append("mean " + _nums(prior.means[i]))
        tril = prior.chols[i][np.tril_indices(d)]
        out.append("chol " + _nums(tril))
    Path(path).write_text("\n".join(out) + "\n")


def load_pose_prior(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split()[:2] != ["gmmprior", "1"]:
        raise UnsupportedFormat("not a gmmprior v1 file")
    try:
        d = int(lines[1].split()[1])
        k = int(lines[2].split()[1])
        weights = np.zeros(k)
        means = np.zeros((k, d))
        chols = np.zeros((k, d, d))
        pos = 3
        for i in range(k):
            weights[i] = float(lines[pos].split()[1]); pos += 1
            means[i] = [float(x) for x in lines[pos].split()[1:]]; pos += 1
            tril = [float(x) for x in lines[pos].split()[1:]]; pos += 1
            chols[i][np.tril_indices(d)] = tril
    except (ValueError, IndexError) as exc:
        raise ParseError(path, pos + 1, f"bad prior record: {exc}") from exc
    return GmmPrior(weights=weights, means=means, chols=chols)
