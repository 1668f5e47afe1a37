"""Template fitting: single-frame fits, multi-frame bundle, scan refinement."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from ..body.model import PoseParams, ShapeParams, shaped_rest
from ..body.prior import default_prior
from ..errors import DimensionMismatch
from ..geometry.mesh import TriMesh, VertexIndex, compute_normals
from ..graph.build import build_graph, deform
from ..graph.solver import corr_block, solve_graphs
from .energies import e_joints, e_prior, e_surface, nearest_pairs
from .skinjac import SkinJacobian, SkinState, pack_params, unpack_params


@dataclass
class JointObservation:
    """Per-frame joint targets in model joint order."""

    positions: np.ndarray  # (J, 3) world space
    weights: np.ndarray    # (J,) confidences, 0 = unobserved


@dataclass
class FitResult:
    beta: ShapeParams
    theta: PoseParams
    energy_history: list = field(default_factory=list)
    lockin_history: list = field(default_factory=list)
    converged: bool = True


def lift_joints(joints2d, weights, depth, camera, window_px=3):
    """Lift 2D joint detections to 3D using the median local depth.

    Joints over depth holes (no valid pixel in the window) get weight 0.
    Returns a JointObservation in world space.
    """
    joints2d = np.asarray(joints2d, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    h, w = depth.shape
    out = np.zeros((len(joints2d), 3))
    out_w = np.zeros(len(joints2d))
    for i, (u, v) in enumerate(joints2d):
        ui, vi = int(round(u)), int(round(v))
        x_lo, x_hi = max(0, ui - window_px), min(w - 1, ui + window_px)
        y_lo, y_hi = max(0, vi - window_px), min(h - 1, vi + window_px)
        patch = depth[y_lo:y_hi + 1, x_lo:x_hi + 1]
        vals = patch[patch > 0.0]
        if len(vals) == 0:
            continue
        d = float(np.median(vals))
        cam_pt = np.array([(u - camera.cx) * d / camera.fx,
                           (v - camera.cy) * d / camera.fy, d])
        out[i] = camera.cam_to_world(cam_pt)
        out_w[i] = weights[i]
    return JointObservation(positions=out, weights=out_w)


def initialize_pose(model, beta, obs):
    """Closed-form rigid initialisation from observed joints.

    Fits the best root rotation/translation (weighted Kabsch over joints)
    so the local-joint stages start near the right global pose.
    """
    _, rest = shaped_rest(model, beta)
    w = obs.weights
    if (w > 0).sum() < 3:
        return PoseParams.rest(model.num_joints)
    mask = w > 0
    ww = w[mask][:, None]
    a = rest[mask]
    b = obs.positions[mask]
    a_bar = (ww * a).sum(axis=0) / ww.sum()
    b_bar = (ww * b).sum(axis=0) / ww.sum()
    h = ((a - a_bar) * ww).T @ (b - b_bar)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # posed root joint: c0 = rest0 + t; others rotate about rest0
    t = b_bar - (r @ (a_bar - rest[0]) + rest[0])
    theta = PoseParams.rest(model.num_joints)
    theta.joint_rots[0] = Rotation.from_matrix(r).as_rotvec()
    theta.root_trans[:] = t
    return theta


class _DampedStep:
    """Shared multiplicative damping schedule for Gauss-Newton steps."""

    def __init__(self, lam=1e-3):
        self.lam = lam

    def solve(self, h, g):
        diag = np.diag(h).copy()
        hd = h + np.diag(self.lam * (diag + 1e-10))
        try:
            return np.linalg.solve(hd, -g)
        except np.linalg.LinAlgError:
            return None

    def reject(self):
        self.lam = min(self.lam * 10.0, 1e12)

    def accept(self):
        self.lam = max(self.lam * 0.5, 1e-12)


def _subsample(n, target, seed=0):
    if target is None or n <= target:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=target, replace=False))


def fit_single(scan, obs, model, prior=None, alpha_r=7.5, alpha_j=2.0,
               sigma=0.2, max_outer=50, tol=1e-5, lockin_iters=5,
               surface_samples=4000, beta0=None, theta0=None,
               optimize_beta=True, callback=None):
    """Fit shape and pose to one scan with joint and prior regularisation.

    Alternates nearest-vertex correspondence updates with damped
    Gauss-Newton steps. The first ``lockin_iters`` outer iterations use only
    the joint and prior terms and update only the root rotation and
    translation (global pose lock-in); afterwards the full objective is
    optimised over all parameters. The returned ``energy_history`` covers
    the full-objective phase and is non-increasing.
    """
    scan_pts = scan.vertices if isinstance(scan, TriMesh) else \
        np.asarray(scan, dtype=np.float64)
    prior = prior if prior is not None else default_prior(model.num_joints)
    s_count = model.num_shape
    j_count = model.num_joints
    beta = beta0 if beta0 is not None else ShapeParams.zeros(s_count)
    if theta0 is None and obs is not None and obs.weights.sum() > 0:
        theta0 = initialize_pose(model, beta, obs)
    theta = theta0 if theta0 is not None else PoseParams.rest(j_count)
    x = pack_params(beta, theta)
    sample_ids = _subsample(len(scan_pts), surface_samples)
    sample_pts = scan_pts[sample_ids]
    # Subsampling keeps the data term an unbiased estimate of the sum over
    # the full scan, so the balance against the fixed-weight regularisers
    # does not depend on the sampling budget.
    surf_w = len(scan_pts) / max(len(sample_pts), 1)
    # Shift the prior so its best attainable value is ~0; the constant does
    # not change the minimizer but keeps the relative stopping test
    # sensitive to actual progress on the data terms.
    prior_shift = min(float(prior.neg_log(mu)[0]) for mu in prior.means) \
        if alpha_r > 0 else 0.0

    result = FitResult(beta=beta, theta=theta)

    def stage_energy(state, jac, pairs, full):
        e_tot = 0.0
        grad = np.zeros(len(x))
        hess = np.zeros((len(x), len(x)))
        if full:
            e, g, h = e_surface(sample_pts, state, pairs=pairs, jac=jac)
            e_tot += surf_w * e; grad += surf_w * g; hess += surf_w * h
        if obs is not None and alpha_j > 0:
            e, g, h = e_joints(obs.positions, obs.weights, state, sigma, jac=jac)
            e_tot += alpha_j * e; grad += alpha_j * g; hess += alpha_j * h
        if alpha_r > 0:
            e, g, h = e_prior(prior, state, num_params=len(x))
            e_tot += alpha_r * (e - prior_shift)
            grad += alpha_r * g; hess += alpha_r * h
        return e_tot, grad, hess

    def plain_energy(xv, pairs, full):
        b, th = unpack_params(xv, s_count, j_count)
        st = SkinState(model, b, th)
        e = 0.0
        if full:
            verts = st.vertices()
            r = verts[pairs] - sample_pts
            e += surf_w * float((r * r).sum())
        if obs is not None and alpha_j > 0:
            res = st.joints - obs.positions
            ss = (res * res).sum(axis=1)
            e += alpha_j * float(
                (obs.weights * ss / (ss + sigma * sigma)).sum())
        if alpha_r > 0:
            from .energies import theta_prior_vector
            xp, _ = theta_prior_vector(prior, th, s_count, j_count)
            e += alpha_r * (float(prior.neg_log(xp)[0]) - prior_shift)
        return e

    has_lockin_terms = (obs is not None and alpha_j > 0) or alpha_r > 0
    if not has_lockin_terms:
        lockin_iters = 0
    step = _DampedStep()
    prev_energy = None
    for outer in range(max_outer):
        full = outer >= lockin_iters
        beta_cur, theta_cur = unpack_params(x, s_count, j_count)
        state = SkinState(model, beta_cur, theta_cur)
        jac = SkinJacobian(state)
        pairs = None
        if full:
            pairs, _ = nearest_pairs(sample_pts, state.vertices())
        energy, grad, hess = stage_energy(state, jac, pairs, full)
        if callback is not None:
            callback(outer, full, energy, beta_cur, theta_cur)
        frozen = np.zeros(len(x), dtype=bool)
        if not optimize_beta:
            frozen[:s_count] = True
        if not full:
            # global pose lock-in: only the root transform moves
            frozen[:] = True
            frozen[s_count:s_count + 3] = False
            frozen[s_count + 3 * j_count:] = False
        if frozen.any():
            idx = np.where(frozen)[0]
            grad[idx] = 0.0
            hess[idx, :] = 0.0
            hess[:, idx] = 0.0
            hess[idx, idx] = 1.0
        history = result.energy_history if full else result.lockin_history
        if not history:
            history.append(energy)
            if full:
                prev_energy = energy
        if np.abs(grad).max() < 1e-12:
            if full:
                break
            continue
        accepted = False
        for _ in range(10):
            delta = step.solve(hess, grad)
            if delta is None or not np.all(np.isfinite(delta)):
                step.reject()
                continue
            x_try = x + delta
            e_try = plain_energy(x_try, pairs, full)
            if e_try < energy:
                x = x_try
                step.accept()
                accepted = True
                history.append(e_try)
                break
            step.reject()
        if not accepted:
            if full:
                break
            continue
        if full:
            rel = (prev_energy - e_try) / max(prev_energy, 1e-300) \
                if prev_energy is not None else 1.0
            prev_energy = e_try
            if rel < tol and outer > lockin_iters:
                break
    else:
        result.converged = False

    beta_f, theta_f = unpack_params(x, s_count, j_count)
    result.beta = beta_f
    result.theta = PoseParams(theta_f.joint_rots, theta_f.root_trans)
    return result


def frontal_frame(fits):
    """Index of the fit whose root rotation is nearest the identity."""
    angles = [np.linalg.norm(f.theta.joint_rots[0]) for f in fits]
    return int(np.argmin(angles))


def bundle_adjust(scans, fits, model, max_outer=50, tol=1e-5,
                  surface_samples=3000):
    """Jointly refine one shared shape and per-frame poses (surface term).

    ``fits`` are the per-frame initial fits; the shared shape starts from
    the frontal frame (root rotation nearest identity). Returns
    (beta, [theta_k], energy_history, converged).
    """
    n = len(scans)
    if n == 0:
        raise DimensionMismatch("no scans to bundle")
    s_count = model.num_shape
    j_count = model.num_joints
    p_frame = 3 * j_count + 3
    beta = ShapeParams(fits[frontal_frame(fits)].beta.coeffs.copy())
    thetas = [f.theta.copy() for f in fits]

    scan_pts = []
    surf_w = []
    for scan in scans:
        pts = scan.vertices if isinstance(scan, TriMesh) else np.asarray(scan)
        ids = _subsample(len(pts), surface_samples)
        scan_pts.append(pts[ids])
        surf_w.append(len(pts) / max(len(ids), 1))

    def pack():
        return np.concatenate([beta.coeffs]
                              + [pack_params(ShapeParams.zeros(0), th)
                                 for th in thetas])

    def unpack(xv):
        b = ShapeParams(xv[:s_count])
        ths = []
        for k in range(n):
            seg = xv[s_count + k * p_frame: s_count + (k + 1) * p_frame]
            ths.append(PoseParams.unwrapped(
                seg[:3 * j_count].reshape(j_count, 3), seg[3 * j_count:]))
        return b, ths

    def total_energy(xv, pair_list):
        b, ths = unpack(xv)
        e = 0.0
        for k in range(n):
            st = SkinState(model, b, ths[k])
            r = st.vertices()[pair_list[k]] - scan_pts[k]
            e += surf_w[k] * float((r * r).sum())
        return e

    x = pack()
    p_total = len(x)
    step = _DampedStep()
    history = []
    converged = True
    prev_energy = None
    for outer in range(max_outer):
        b, ths = unpack(x)
        pair_list = []
        grad = np.zeros(p_total)
        hess = np.zeros((p_total, p_total))
        energy = 0.0
        for k in range(n):
            st = SkinState(model, b, ths[k])
            jac = SkinJacobian(st)
            pairs, _ = nearest_pairs(scan_pts[k], st.vertices())
            pair_list.append(pairs)
            e, g, h = e_surface(scan_pts[k], st, pairs=pairs, jac=jac)
            energy += surf_w[k] * e
            # per-frame packing [beta | theta_k] -> global columns
            cols = np.concatenate([
                np.arange(s_count),
                s_count + k * p_frame + np.arange(p_frame)])
            grad[cols] += surf_w[k] * g
            hess[np.ix_(cols, cols)] += surf_w[k] * h
        if not history:
            history.append(energy)
            prev_energy = energy
        if np.abs(grad).max() < 1e-12:
            break
        accepted = False
        for _ in range(10):
            delta = step.solve(hess, grad)
            if delta is None or not np.all(np.isfinite(delta)):
                step.reject()
                continue
            x_try = x + delta
            e_try = total_energy(x_try, pair_list)
            if e_try < energy:
                x = x_try
                step.accept()
                accepted = True
                history.append(e_try)
                break
            step.reject()
        if not accepted:
            break
        rel = (prev_energy - e_try) / max(prev_energy, 1e-300)
        prev_energy = e_try
        if rel < tol:
            break
    else:
        converged = False

    beta_f, ths = unpack(x)
    thetas_f = [PoseParams(t.joint_rots, t.root_trans) for t in ths]
    return beta_f, thetas_f, history, converged


def refine_scan_to_template(scan, template, tau_corr=0.03, node_count=400,
                            match_iters=3, solve_iters=20, tol=1e-6,
                            alpha_reg=0.2, alpha_smooth=0.5, alpha_corr=1.0):
    """Deform a scan onto the fitted template with a free-form graph.

    Correspondence targets are tangent-plane projections onto the template
    near each scan vertex, re-matched ``match_iters`` times. Returns
    (deformed scan mesh, per-vertex template match within tau_corr or -1,
    SolveInfo of the last solve).
    """
    mesh = scan if isinstance(scan, TriMesh) else TriMesh(np.asarray(scan))
    if template.normals is None:
        template = compute_normals(template)
    count = min(node_count, mesh.num_vertices)
    graph = build_graph(mesh, node_count=count)
    t_index = VertexIndex(template.vertices)
    info = None
    for _ in range(match_iters):
        current = deform(graph)
        cur_pts = current.vertices if isinstance(current, TriMesh) else current
        ids, d = t_index.query(cur_pts)
        matched = np.flatnonzero(d <= tau_corr)
        if len(matched) == 0:
            break
        near = template.vertices[ids[matched]]
        nrm = template.normals[ids[matched]]
        off = ((cur_pts[matched] - near) * nrm).sum(axis=1)
        targets = cur_pts[matched] - off[:, None] * nrm
        blocks = [corr_block([graph], 0, matched, targets=targets)]
        info = solve_graphs([graph], blocks, alpha_reg=alpha_reg,
                            alpha_smooth=alpha_smooth, alpha_corr=alpha_corr,
                            max_iter=solve_iters, tol=tol)
    deformed = deform(graph)
    out_mesh = deformed if isinstance(deformed, TriMesh) else \
        mesh.with_vertices(deformed)
    ids, d = t_index.query(out_mesh.vertices)
    corr_map = np.where(d <= tau_corr, ids, -1).astype(np.int64)
    return out_mesh, corr_map, info
