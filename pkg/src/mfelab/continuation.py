"""Branch tracing in lambda: natural stepping or pseudo-arclength through
folds, up to a blow-up cutoff, with per-point mass and identity
diagnostics recorded for quantization checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .core import (JacobianSolver, Params, density_values, newton_solve,
                   residual_values, split_solution)
from .grid import DiscreteDomain, Field, zero_field
from .variational import evaluate_J

BRANCH_CSV_HEADER = ("step,lambda,u_max,J,qid_residual,n_peaks,"
                     "peak1_x,peak1_y,peak1_m1,peak1_mg,min_bdry_dist,u_minus_sup")


@dataclass
class BranchConfig:
    lambda_start: float
    lambda_target: float
    ds0: float = 0.5
    ds_min: float = 1e-6
    ds_max: float = 2.0
    arclength: bool = True
    u_max_cutoff: float = 25.0
    thin_stride: int = 10
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    max_points: int = 2000
    u_weight: float = 1.0     # weight of the field part in the arclength metric

    def __post_init__(self):
        if not (0 < self.ds_min <= self.ds0 <= self.ds_max):
            raise ValueError("step bounds must satisfy 0 < ds_min <= ds0 <= ds_max")


@dataclass
class BranchPoint:
    step: int
    lam: float
    u_max: float
    J_value: float
    mass_total_1: float
    mass_total_gamma: float
    peaks: list = field(default_factory=list)
    qid_residual: float = math.nan
    min_peak_boundary_distance: float = math.nan
    u_minus_sup: float = math.nan
    fold: bool = False
    u_ref: Field | None = None


@dataclass
class BranchResult:
    points: list[BranchPoint]
    params: Params
    config: BranchConfig
    termination: str                 # "target" | "blowup" | "step_underflow" | "max_points"
    fold_indices: list[int]
    monitors: dict


class BranchError(RuntimeError):
    pass


def _make_point(step: int, u: Field, lam: float, p0: Params, cfg: BranchConfig) -> BranchPoint:
    p = p0.with_lam(lam)
    dom = u.domain
    fv = evaluate_J(u, p, 0.5)
    m1_tot = lam * dom.integrate(density_values(dom, u.values, 1.0))
    mg_tot = lam * dom.integrate(density_values(dom, u.values, p.gamma))
    peaks = diagnostics.find_peaks(u, p)
    pos = [pk for pk in peaks if not pk.negative]
    qid = math.nan
    if pos:
        # identity residual against the limit masses: principal mass from the
        # plateau ball, gamma mass from the two-cell atom estimate
        mg_atom = diagnostics.local_mass(u, p, (pos[0].x, pos[0].y),
                                         2.0 * dom.spacing, p.gamma)
        qid = diagnostics.quadratic_identity_residual(
            pos[0].local_mass_1, mg_atom, p.sigma, p.gamma)
    bd = diagnostics.boundary_distance_of_peaks(peaks, dom)
    um_sup = math.nan
    if p.gamma < 0.0 and p.lam > 0.0:
        _, u_minus, _ = split_solution(u, p)
        um_sup = u_minus.sup_norm
    return BranchPoint(step=step, lam=lam, u_max=u.max, J_value=fv.J,
                       mass_total_1=m1_tot, mass_total_gamma=mg_tot,
                       peaks=peaks, qid_residual=qid,
                       min_peak_boundary_distance=bd, u_minus_sup=um_sup,
                       u_ref=u)


def _arclength_corrector(dom: DiscreteDomain, p0: Params, u: np.ndarray, lam: float,
                         u_prev: np.ndarray, lam_prev: float,
                         tu: np.ndarray, tlam: float, ds: float,
                         cfg: BranchConfig) -> tuple[np.ndarray, float, bool, int]:
    """Newton iteration on the bordered system (residual + arclength
    constraint), solved by block elimination with two Jacobian solves."""
    w2 = cfg.u_weight ** 2

    def constraint(uv, lv):
        return w2 * dom.wdot(tu, uv - u_prev) + tlam * (lv - lam_prev) - ds

    u_start, lam_start = u.copy(), lam
    fval = residual_values(dom, u, p0.with_lam(lam))
    merit = max(float(np.abs(fval).max()), abs(constraint(u, lam)))
    for it in range(cfg.newton_max_iter):
        c = constraint(u, lam)
        if float(np.abs(fval).max()) <= cfg.newton_tol and abs(c) <= 1e-10 * max(1.0, abs(ds)):
            # reject correctors that wandered far from the predictor
            # (branch jumping near folds); the caller then halves ds
            drift = math.sqrt(w2 * dom.wdot(u - u_start, u - u_start)
                              + (lam - lam_start) ** 2)
            return u, lam, drift <= 2.0 * abs(ds), it
        p = p0.with_lam(lam)
        solver = JacobianSolver(Field(dom, u), p)
        flam = -(density_values(dom, u, 1.0))
        sg = p.sigma * p.gamma
        if sg != 0.0:
            flam = flam - sg * density_values(dom, u, p.gamma)
        a = solver.solve(fval, check=False)
        b = solver.solve(flam, check=False)
        denom = tlam - w2 * dom.wdot(tu, b)
        if denom == 0.0:
            return u, lam, False, it
        dlam = (w2 * dom.wdot(tu, a) - c) / denom
        du = -a - b * dlam
        t = 1.0
        accepted = False
        while t >= 2.0 ** -20:
            u_try = u + t * du
            lam_try = lam + t * dlam
            if lam_try < 0.0:
                t *= 0.5
                continue
            f_try = residual_values(dom, u_try, p0.with_lam(lam_try))
            m_try = max(float(np.abs(f_try).max()), abs(constraint(u_try, lam_try)))
            if m_try < merit:
                u, lam, fval, merit = u_try, lam_try, f_try, m_try
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return u, lam, False, it
    c = constraint(u, lam)
    ok = float(np.abs(fval).max()) <= cfg.newton_tol and abs(c) <= 1e-10 * max(1.0, abs(ds))
    return u, lam, ok, cfg.newton_max_iter


def trace_branch(p0: Params, dom: DiscreteDomain, cfg: BranchConfig,
                 u0: Field | None = None) -> BranchResult:
    """Trace the solution family from ``lambda_start`` toward
    ``lambda_target`` (or blow-up).

    The first point comes from a plain Newton solve seeded with ``u0``
    (zero by default).  In arclength mode subsequent points use a secant
    predictor with a bordered Newton corrector; steps double after easy
    solves and halve on failure within the configured bounds.
    """
    seed = u0 if u0 is not None else zero_field(dom)
    u_first, rep = newton_solve(seed, p0.with_lam(cfg.lambda_start),
                                tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
    if not rep.converged:
        raise BranchError(
            f"no converged solution at lambda_start={cfg.lambda_start}: {rep.message}")

    points = [_make_point(0, u_first, cfg.lambda_start, p0, cfg)]
    direction = 1.0 if cfg.lambda_target >= cfg.lambda_start else -1.0
    termination = "target"
    monitors: dict = {"exp_gamma_integral_min": math.inf}

    def note_monitors(u: Field, lam: float):
        dom_ = u.domain
        z = math.exp(p0.gamma * u.values.max()) * float(
            np.dot(dom_.quad_w, np.exp(p0.gamma * u.values - p0.gamma * u.values.max())))
        monitors["exp_gamma_integral_min"] = min(monitors["exp_gamma_integral_min"], z)

    note_monitors(u_first, cfg.lambda_start)

    if abs(cfg.lambda_target - cfg.lambda_start) == 0.0:
        return BranchResult(points, p0, cfg, "target", [], monitors)
    if points[0].u_max >= cfg.u_max_cutoff:
        return BranchResult(points, p0, cfg, "blowup", [], monitors)

    u = u_first.values.copy()
    lam = cfg.lambda_start
    ds = cfg.ds0
    u_prev = None
    lam_prev = None

    while len(points) < cfg.max_points:
        if cfg.arclength and u_prev is not None:
            du = u - u_prev
            dlam = lam - lam_prev
            nrm = math.sqrt(cfg.u_weight ** 2 * dom.wdot(du, du) + dlam * dlam)
            tu, tlam = du / nrm, dlam / nrm
        else:
            tu, tlam = np.zeros_like(u), direction

        while True:
            u_pred = u + ds * tu
            lam_pred = lam + ds * tlam
            if cfg.arclength:
                u_new, lam_new, ok, iters = _arclength_corrector(
                    dom, p0, u_pred.copy(), lam_pred, u, lam, tu, tlam, ds, cfg)
            else:
                lam_new = lam + direction * ds
                cand, rep = newton_solve(Field(dom, u.copy()), p0.with_lam(lam_new),
                                         tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
                u_new, ok, iters = cand.values, rep.converged, rep.iterations
            if ok:
                break
            ds *= 0.5
            if ds < cfg.ds_min:
                return _finish(points, p0, cfg, "step_underflow", monitors)

        crossed = (cfg.lambda_target - lam) * (cfg.lambda_target - lam_new) < 0.0
        if crossed:
            cand, rep = newton_solve(Field(dom, u_new), p0.with_lam(cfg.lambda_target),
                                     tol=cfg.newton_tol, max_iter=cfg.newton_max_iter)
            if rep.converged:
                u_new, lam_new = cand.values, cfg.lambda_target

        u_prev, lam_prev = u, lam
        u, lam = u_new, lam_new
        points.append(_make_point(len(points), Field(dom, u.copy()), lam, p0, cfg))
        note_monitors(Field(dom, u), lam)
        _thin(points, cfg.thin_stride)

        if float(u.max()) >= cfg.u_max_cutoff:
            termination = "blowup"
            break
        if lam == cfg.lambda_target or (crossed and lam == cfg.lambda_target):
            termination = "target"
            break
        if iters <= 3:
            ds = min(ds * 2.0, cfg.ds_max)
    else:
        termination = "max_points"

    return _finish(points, p0, cfg, termination, monitors)


def _thin(points: list[BranchPoint], stride: int):
    """Drop stored fields except first, last, and every stride-th point."""
    if len(points) < 3:
        return
    k = len(points) - 2   # freshly superseded interior point
    if points[k].step % stride != 0:
        points[k].u_ref = None


def _finish(points, p0, cfg, termination, monitors) -> BranchResult:
    folds = detect_folds(points)
    for i in folds:
        points[i].fold = True
    return BranchResult(points, p0, cfg, termination, folds, monitors)


def detect_folds(points: list[BranchPoint]) -> list[int]:
    """Indices where the lambda direction reverses along the branch."""
    lams = [pt.lam for pt in points]
    out = []
    for i in range(1, len(lams) - 1):
        d0 = lams[i] - lams[i - 1]
        d1 = lams[i + 1] - lams[i]
        if d0 * d1 < 0.0:
            out.append(i)
    return out


# ---------------------------------------------------------------------------
# CSV round trip


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def branch_csv_rows(points: list[BranchPoint]):
    yield BRANCH_CSV_HEADER
    for pt in points:
        pos = [pk for pk in pt.peaks if not pk.negative]
        if pos:
            p1 = pos[0]
            pvals = [p1.x, p1.y, p1.local_mass_1, p1.local_mass_gamma]
        else:
            pvals = [math.nan] * 4
        cells = [str(pt.step), _fmt(pt.lam), _fmt(pt.u_max), _fmt(pt.J_value),
                 _fmt(pt.qid_residual), str(len(pt.peaks))]
        cells += [_fmt(v) for v in pvals]
        cells += [_fmt(pt.min_peak_boundary_distance), _fmt(pt.u_minus_sup)]
        yield ",".join(cells)


def write_branch_csv(points: list[BranchPoint], path):
    with open(path, "w") as fh:
        for row in branch_csv_rows(points):
            fh.write(row + "\n")


def read_branch_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != BRANCH_CSV_HEADER:
            raise ValueError(f"unexpected branch CSV header: {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    cols = BRANCH_CSV_HEADER.split(",")
    if data.size == 0:
        return {c: np.array([]) for c in cols}
    return {c: data[:, i] for i, c in enumerate(cols)}
