"""The free-energy functional and its apparatus: evaluation with the
two-term coercivity split, H1 gradient-flow minimization with divergence
certificates, the truncated log-profile test family and its slope scan,
and the two-region mass-spreading membership certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Params, density_values, log_int_exp, residual_values
from .grid import DiscreteDomain, Field

FAMILY_CSV_HEADER = "r,theta,J,K1,Kg,cm_x,cm_y"
FLOW_CSV_HEADER = "iter,J,grad_norm,step"

SIXTEEN_PI = 16.0 * math.pi
EIGHT_PI = 8.0 * math.pi


@dataclass(frozen=True)
class FunctionalValue:
    J: float
    dirichlet: float
    logterm_1: float
    logterm_gamma: float
    K1: float
    Kgamma: float
    epsilon_used: float


def evaluate_J(u: Field, p: Params, epsilon: float) -> FunctionalValue:
    """J = 0.5 int |grad u|^2 - lam ln int e^u - lam sigma ln int e^{gamma u},
    split as K1 + Kgamma with the epsilon weighting of the Dirichlet term.

    The Dirichlet part is the stencil quadratic form, the log terms are
    overflow-safe; K1 + Kgamma = J is an identity for any epsilon.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon out of (0,1), got {epsilon}")
    dirichlet = u.domain.dirichlet_energy(u.values)
    l1 = p.lam * log_int_exp(u, 1.0)
    lg = p.lam * p.sigma * log_int_exp(u, p.gamma)
    j = dirichlet - l1 - lg
    k1 = (1.0 - epsilon) * dirichlet - l1
    kg = epsilon * dirichlet - lg
    return FunctionalValue(J=j, dirichlet=dirichlet, logterm_1=l1, logterm_gamma=lg,
                           K1=k1, Kgamma=kg, epsilon_used=epsilon)


def j_value(u: Field, p: Params) -> float:
    return (u.domain.dirichlet_energy(u.values)
            - p.lam * log_int_exp(u, 1.0)
            - p.lam * p.sigma * log_int_exp(u, p.gamma))


def G_value(u: Field, p: Params) -> float:
    """Compact convex part ln int e^u + sigma ln int e^{gamma u}."""
    return log_int_exp(u, 1.0) + p.sigma * log_int_exp(u, p.gamma)


def epsilon_window(p: Params) -> tuple[float, float]:
    """Feasible epsilon interval [lam sigma gamma^2 / 8pi, 1 - lam/16pi);
    nonempty exactly when lam (1 + 2 sigma gamma^2) < 16 pi."""
    return (p.lam * p.sigma * p.gamma ** 2 / EIGHT_PI, 1.0 - p.lam / SIXTEEN_PI)


# ---------------------------------------------------------------------------
# H1 gradient flow


@dataclass
class FlowResult:
    u: Field
    certificate: str                      # "minimizer" | "divergence" | "inconclusive"
    iterations: int
    final_J: float
    final_grad_norm: float
    j_floor: float
    trace: list[tuple[int, float, float, float]]
    message: str = ""


def default_divergence_floor(p: Params) -> float:
    """Floor separating bounded-below minimization from the grid-limited
    descent toward a single-cell spike.  On a fixed grid the functional is
    always bounded below (the Dirichlet form grows quadratically against a
    linear log-sum-exp), with spike depth about -lam^2 G_h(p,p)/2, so the
    floor must sit between the subcritical minimum (order -lam) and that
    depth."""
    return -(30.0 + 2.5 * p.lam)


def gradient_flow_minimize(u0: Field, p: Params, tol: float = 1e-8,
                           max_iter: int = 5000, step0: float = 1.0,
                           j_floor: float | None = None) -> FlowResult:
    """H1 gradient descent with Armijo backtracking on J.

    Each step solves one Poisson problem on the Euler-Lagrange residual.
    Returns a minimizer certificate when the H1 dual norm of the gradient
    drops below tol, or a divergence certificate when J falls below the
    floor.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    dom = u0.domain
    floor = default_divergence_floor(p) if j_floor is None else j_floor
    u = u0.values.copy()
    jcur = j_value(Field(dom, u), p)
    step = step0
    trace: list[tuple[int, float, float, float]] = []

    for it in range(1, max_iter + 1):
        fval = residual_values(dom, u, p)
        g = dom.poisson_solve(fval)
        gn = math.sqrt(max(0.0, float(np.dot(dom.op_w * fval, g))))
        trace.append((it, jcur, gn, step))
        if gn <= tol:
            return FlowResult(Field(dom, u), "minimizer", it, jcur, gn, floor, trace)
        if jcur < floor:
            return FlowResult(Field(dom, u), "divergence", it, jcur, gn, floor, trace,
                              message=f"J fell below the floor {floor:.6g}")
        accepted = False
        # float-aware sufficient decrease: near the minimum the true decrease
        # sits below one ulp of J, so allow that much and keep contracting
        slack = 8.0 * np.finfo(float).eps * max(abs(jcur), 1.0)
        while step >= 2.0 ** -30:
            u_try = u + (-step) * g
            j_try = j_value(Field(dom, u_try), p)
            if j_try <= jcur - 1e-4 * step * gn * gn + slack:
                u, jcur = u_try, j_try
                step = min(step * 2.0, 2.0)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return FlowResult(Field(dom, u), "inconclusive", it, jcur, gn, floor, trace,
                              message="Armijo search stalled")

    return FlowResult(Field(dom, u), "inconclusive", max_iter, jcur,
                      trace[-1][2] if trace else math.nan, floor, trace,
                      message="iteration budget exhausted with neither certificate")


def write_flow_csv(result: FlowResult, path):
    with open(path, "w") as fh:
        fh.write(FLOW_CSV_HEADER + "\n")
        for it, j, gn, st in result.trace:
            fh.write(f"{it},{j:.17g},{gn:.17g},{st:.17g}\n")


# ---------------------------------------------------------------------------
# truncated log-profile family


def build_family_field(dom: DiscreteDomain, center: tuple[float, float],
                       eps0: float, r: float) -> Field:
    """Test profile carried by the ball B(center, eps0): equal to
    4 ln(1/(1-r)) on the scaled core, 4 ln(1/|X|) on the scaled annulus
    (X the ball coordinate), zero outside the ball."""
    if dom.radial:
        raise ValueError("the test family needs a 2-D domain")
    if not (0.0 <= r < 1.0):
        raise ValueError(f"r out of [0,1), got {r}")
    if dom.distance_to_boundary_point(*center) <= eps0:
        raise ValueError(f"ball of radius {eps0} around {center} is not inside the domain")
    if r >= 1.0 - 2.0 * dom.spacing / eps0:
        raise ValueError(f"r={r} leaves the core unresolved at spacing {dom.spacing}")
    rho = np.hypot(dom.coords[:, 0] - center[0], dom.coords[:, 1] - center[1]) / eps0
    vals = 4.0 * np.log(1.0 / np.clip(rho, 1.0 - r, 1.0))
    return Field(dom, vals)


def default_family_curve(dom: DiscreteDomain):
    """Default closed curve for the family: for a holed rectangle, the loop
    midway between hole and outer boundary; otherwise a circle around the
    domain center.  Returns (curve, eps0) with eps0 a third of the minimal
    boundary clearance along the curve."""
    g = dom.geometry
    if dom.shape_tag == "rectangle_with_hole":
        hx0, hy0, hx1, hy1 = g["hole"]
        w, h = g["width"], g["height"]
        x0, x1 = hx0 / 2.0, (hx1 + w) / 2.0
        y0, y1 = hy0 / 2.0, (hy1 + h) / 2.0

        per = 2.0 * ((x1 - x0) + (y1 - y0))
        lx, ly = x1 - x0, y1 - y0

        def curve(theta: float) -> tuple[float, float]:
            s = (theta % (2.0 * math.pi)) / (2.0 * math.pi) * per
            if s < lx:
                return (x0 + s, y0)
            s -= lx
            if s < ly:
                return (x1, y0 + s)
            s -= ly
            if s < lx:
                return (x1 - s, y1)
            s -= lx
            return (x0, y1 - s)
    else:
        if dom.shape_tag == "disk":
            cx = cy = 0.0
            rad = 0.5 * g["radius"]
        else:
            cx, cy = g["width"] / 2.0, g["height"] / 2.0
            rad = 0.25 * min(g["width"], g["height"])

        def curve(theta: float) -> tuple[float, float]:
            return (cx + rad * math.cos(theta), cy + rad * math.sin(theta))

    clear = min(dom.distance_to_boundary_point(*curve(th))
                for th in np.linspace(0.0, 2.0 * math.pi, 257))
    return curve, clear / 3.0


@dataclass(frozen=True)
class FamilyPoint:
    r: float
    theta: float
    J: float
    K1: float
    Kgamma: float
    cm: tuple[float, float]


@dataclass
class FamilyScan:
    points: list[FamilyPoint]
    slope: float
    intercept: float
    slope_theory: float
    sup_J: float


def family_scan(p: Params, dom: DiscreteDomain, curve, eps0: float,
                r_values, theta_values, epsilon: float = 0.5) -> FamilyScan:
    """Evaluate J over the (r, theta) family grid, fit J against
    t = ln(1/(1-r)), and report the scan supremum (an upper bound for the
    minimax level)."""
    from .diagnostics import center_of_mass

    r_values = [float(r) for r in r_values]
    theta_values = [float(t) for t in theta_values]
    if not r_values or not theta_values:
        raise ValueError("family grids must be nonempty")
    pts: list[FamilyPoint] = []
    for r in r_values:
        for th in theta_values:
            u = build_family_field(dom, curve(th), eps0, r)
            fv = evaluate_J(u, p, epsilon)
            pts.append(FamilyPoint(r=r, theta=th, J=fv.J, K1=fv.K1, Kgamma=fv.Kgamma,
                                   cm=center_of_mass(u)))
    t = np.log(1.0 / (1.0 - np.array([q.r for q in pts])))
    j = np.array([q.J for q in pts])
    slope, intercept = np.polyfit(t, j, 1)
    return FamilyScan(points=pts, slope=float(slope), intercept=float(intercept),
                      slope_theory=2.0 * (EIGHT_PI - p.lam), sup_J=float(j.max()))


def write_family_csv(scan: FamilyScan, path):
    with open(path, "w") as fh:
        fh.write(FAMILY_CSV_HEADER + "\n")
        for q in scan.points:
            fh.write(f"{q.r:.17g},{q.theta:.17g},{q.J:.17g},{q.K1:.17g},"
                     f"{q.Kgamma:.17g},{q.cm[0]:.17g},{q.cm[1]:.17g}\n")


# ---------------------------------------------------------------------------
# two-region mass spreading certificate


@dataclass(frozen=True)
class MembershipWitness:
    rect_a: tuple[float, float, float, float]
    rect_b: tuple[float, float, float, float]
    mass_a: float
    mass_b: float
    distance: float


def improved_mt_membership(u: Field, a0: float, d0: float,
                           levels: int = 3) -> MembershipWitness | None:
    """Search a dyadic family of axis-aligned rectangles for two regions at
    distance >= d0 each carrying e^u-measure fraction >= a0.

    The search is a sufficient certificate over rectangles with corners on
    the 2^levels lattice of the bounding box; a miss is not a proof of
    non-membership.
    """
    if not (0.0 < a0 <= 0.5):
        raise ValueError(f"a0 out of (0, 0.5], got {a0}")
    if d0 <= 0.0:
        raise ValueError(f"d0 must be positive, got {d0}")
    dom = u.domain
    mu = density_values(dom, u.values, 1.0) * dom.quad_w
    x = dom.coords[:, 0]
    y = dom.coords[:, 1]
    if dom.shape_tag in ("disk", "disk_radial"):
        rad = dom.geometry["radius"]
        bx0, bx1, by0, by1 = -rad, rad, -rad, rad
    else:
        bx0, by0 = 0.0, 0.0
        bx1, by1 = dom.geometry["width"], dom.geometry["height"]

    m = 2 ** levels
    xs = np.linspace(bx0, bx1, m + 1)
    ys = np.linspace(by0, by1, m + 1)
    ci = np.clip(np.floor((x - bx0) / (bx1 - bx0) * m).astype(int), 0, m - 1)
    cj = np.clip(np.floor((y - by0) / (by1 - by0) * m).astype(int), 0, m - 1)
    cell = np.zeros((m, m))
    np.add.at(cell, (cj, ci), mu)
    pref = np.zeros((m + 1, m + 1))
    pref[1:, 1:] = np.cumsum(np.cumsum(cell, axis=0), axis=1)

    rects = []
    masses = []
    for i0 in range(m):
        for i1 in range(i0 + 1, m + 1):
            for j0 in range(m):
                for j1 in range(j0 + 1, m + 1):
                    rects.append((xs[i0], ys[j0], xs[i1], ys[j1]))
                    masses.append(pref[j1, i1] - pref[j0, i1] - pref[j1, i0] + pref[j0, i0])
    rects_arr = np.array(rects)
    masses_arr = np.array(masses)
    good = np.nonzero(masses_arr >= a0)[0]
    if len(good) < 2:
        return None

    ra = rects_arr[good]
    gx = np.maximum(0.0, np.maximum(ra[:, None, 0] - ra[None, :, 2],
                                    ra[None, :, 0] - ra[:, None, 2]))
    gy = np.maximum(0.0, np.maximum(ra[:, None, 1] - ra[None, :, 3],
                                    ra[None, :, 1] - ra[:, None, 3]))
    dist = np.hypot(gx, gy)
    ok = dist >= d0
    if not ok.any():
        return None
    ma = masses_arr[good]
    score = np.minimum(ma[:, None], ma[None, :]) * ok
    i, j = np.unravel_index(int(score.argmax()), score.shape)
    return MembershipWitness(rect_a=tuple(ra[i]), rect_b=tuple(ra[j]),
                             mass_a=float(ma[i]), mass_b=float(ma[j]),
                             distance=float(dist[i, j]))
