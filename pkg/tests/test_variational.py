import math

import numpy as np
import pytest

from mfelab import grid
from mfelab.core import Params, newton_solve, residual
from mfelab.grid import Field, zero_field
from mfelab.variational import (EIGHT_PI, G_value, build_family_field,
                                default_family_curve, epsilon_window, evaluate_J,
                                family_scan, gradient_flow_minimize,
                                improved_mt_membership, j_value)

from oracles import (bubble_dirichlet_energy, bubble_exp_integral, bubble_field,
                     bubble_lambda)


def square(h=1 / 16):
    return grid.build_rectangle(1.0, 1.0, h)


# ---------------------------------------------------------------------------
# functional evaluation


def test_J_zero_field_unit_area():
    dom = square()
    p = Params(lam=3.0, sigma=0.5, gamma=0.3)
    fv = evaluate_J(zero_field(dom), p, 0.5)
    area = dom.integrate(np.ones(dom.n))
    expected = -p.lam * math.log(area) - p.lam * p.sigma * math.log(area)
    assert fv.J == pytest.approx(expected, abs=1e-12)
    assert fv.dirichlet == 0.0


def test_J_zero_field_area_two():
    dom = grid.build_rectangle(2.0, 1.0, 1 / 256)
    p = Params(lam=3.0, sigma=0.5, gamma=0.3)
    fv = evaluate_J(zero_field(dom), p, 0.5)
    area = dom.integrate(np.ones(dom.n))
    assert area == pytest.approx(2.0, rel=0.02)
    assert fv.J == pytest.approx(-p.lam * (1.0 + p.sigma) * math.log(2.0), rel=0.02)
    assert fv.J == pytest.approx(-p.lam * (1.0 + p.sigma) * math.log(area), abs=1e-12)


def test_J_bubble_against_quadrature():
    dom = grid.build_disk_radial(1.0, 1 / 256)
    delta = 1.0
    lam = bubble_lambda(delta)
    u = bubble_field(dom, delta)
    fv = evaluate_J(u, Params(lam=lam, sigma=0.0, gamma=0.0), 0.5)
    ref = bubble_dirichlet_energy(delta) - lam * math.log(bubble_exp_integral(delta))
    assert abs(fv.J - ref) <= 0.005 * abs(ref)


def test_split_identity_random():
    dom = square()
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = Params(lam=float(rng.uniform(0, 20)), sigma=float(rng.uniform(0, 2)),
                   gamma=float(rng.uniform(-0.99, 0.99)))
        u = Field(dom, 3 * rng.standard_normal(dom.n))
        eps = float(rng.uniform(1e-3, 1 - 1e-3))
        fv = evaluate_J(u, p, eps)
        assert abs(fv.K1 + fv.Kgamma - fv.J) <= 1e-9 * max(1.0, abs(fv.J))
        assert abs(fv.J - (fv.dirichlet - fv.logterm_1 - fv.logterm_gamma)) \
            <= 1e-10 * max(1.0, abs(fv.J))


def test_epsilon_validation():
    dom = square()
    with pytest.raises(ValueError):
        evaluate_J(zero_field(dom), Params(lam=1, sigma=0, gamma=0), 0.0)
    with pytest.raises(ValueError):
        evaluate_J(zero_field(dom), Params(lam=1, sigma=0, gamma=0), 1.0)


def test_epsilon_window_feasibility():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = Params(lam=float(rng.uniform(0.1, 60.0)), sigma=float(rng.uniform(0, 3)),
                   gamma=float(rng.uniform(-0.9, 0.9)))
        lo, hi = epsilon_window(p)
        nonempty = lo < hi
        assert nonempty == (p.lam * (1.0 + 2.0 * p.sigma * p.gamma ** 2) < 16 * math.pi)


def test_G_matches_logterms():
    dom = square()
    rng = np.random.default_rng(2)
    p = Params(lam=2.5, sigma=0.7, gamma=-0.4)
    u = Field(dom, rng.standard_normal(dom.n))
    fv = evaluate_J(u, p, 0.3)
    assert abs(G_value(u, p) - (fv.logterm_1 + fv.logterm_gamma) / p.lam) <= 1e-12


def test_G_convexity_second_differences():
    dom = square()
    rng = np.random.default_rng(3)
    p = Params(lam=1.0, sigma=0.8, gamma=0.45)
    h = 1e-3
    for _ in range(10):
        u = Field(dom, 2 * rng.standard_normal(dom.n))
        phi = rng.standard_normal(dom.n)
        up = Field(dom, u.values + h * phi)
        um = Field(dom, u.values - h * phi)
        second = (G_value(up, p) - 2 * G_value(u, p) + G_value(um, p)) / (h * h)
        assert second >= -1e-6


# ---------------------------------------------------------------------------
# gradient flow


def test_flow_lambda_zero():
    dom = square()
    rng = np.random.default_rng(4)
    u0 = Field(dom, 0.3 * rng.standard_normal(dom.n))
    res = gradient_flow_minimize(u0, Params(lam=0.0, sigma=0.0, gamma=0.0), tol=1e-10)
    assert res.certificate == "minimizer"
    assert res.u.sup_norm < 1e-10
    assert abs(res.final_J) < 1e-12


def test_flow_subcritical_minimizer():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 32)
    rng = np.random.default_rng(5)
    p = Params(lam=4 * math.pi, sigma=0.5, gamma=0.3)
    u0 = Field(dom, 0.5 * rng.standard_normal(dom.n))
    res = gradient_flow_minimize(u0, p, tol=1e-10, max_iter=30000)
    assert res.certificate == "minimizer"
    assert residual(res.u, p).sup_norm <= 1e-6
    # cross-check against the Newton solver from the same basin
    sol, rep = newton_solve(res.u, p)
    assert rep.converged
    assert np.abs(sol.values - res.u.values).max() <= 1e-6


def test_flow_divergence_supercritical():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 128)
    p = Params(lam=10 * math.pi, sigma=0.0, gamma=0.0)
    curve, _ = default_family_curve(dom)
    seed = build_family_field(dom, curve(0.0), 0.2, 0.9)
    res = gradient_flow_minimize(seed, p, tol=1e-9, max_iter=20000)
    assert res.certificate == "divergence"
    assert res.final_J < res.j_floor


def test_flow_trace_monotone_J():
    dom = square()
    rng = np.random.default_rng(6)
    p = Params(lam=2.0, sigma=0.3, gamma=-0.2)
    u0 = Field(dom, rng.standard_normal(dom.n))
    res = gradient_flow_minimize(u0, p, tol=1e-8, max_iter=4000)
    js = [row[1] for row in res.trace]
    assert all(b <= a + 1e-14 for a, b in zip(js, js[1:]))


# ---------------------------------------------------------------------------
# test family


def test_family_field_r_zero():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 32)
    u = build_family_field(dom, (0.5, 0.5), 0.2, 0.0)
    assert u.sup_norm == 0.0


def test_family_field_peak_value():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 128)
    # center on a lattice node: the sampled core carries the exact plateau
    u = build_family_field(dom, (0.5, 0.5), 0.2, 0.9)
    assert u.max == pytest.approx(4.0 * math.log(10.0), abs=1e-12)
    assert u.values.min() == 0.0


def test_family_field_validation():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 32)
    with pytest.raises(ValueError):
        build_family_field(dom, (0.05, 0.5), 0.2, 0.5)  # ball leaves the domain
    with pytest.raises(ValueError):
        build_family_field(dom, (0.5, 0.5), 0.2, 0.999)  # core unresolved
    rad = grid.build_disk_radial(1.0, 1 / 32)
    with pytest.raises(ValueError):
        build_family_field(rad, (0.0, 0.0), 0.2, 0.5)


def test_family_gamma_integral_floor():
    # int e^{gamma h} >= |Omega| - pi eps0^2 for gamma < 0
    dom = grid.build_rectangle(1.0, 1.0, 1 / 128)
    eps0 = 0.2
    area = dom.integrate(np.ones(dom.n))
    for r in (0.3, 0.7, 0.9):
        u = build_family_field(dom, (0.5, 0.5), eps0, r)
        val = dom.integrate(np.exp(-0.4 * u.values))
        assert val >= area - math.pi * eps0 ** 2 - 1e-9


def test_family_scan_slopes_and_sign_flip():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 256)
    curve, _ = default_family_curve(dom)
    rv = np.linspace(0.9, 0.955, 6)
    th = np.linspace(0, 2 * math.pi, 4, endpoint=False)
    slopes = {}
    for lam in (6 * math.pi, 10 * math.pi):
        scan = family_scan(Params(lam=lam, sigma=0.0, gamma=0.0), dom, curve, 0.2, rv, th)
        assert abs(scan.slope - scan.slope_theory) <= 0.2 * abs(scan.slope_theory)
        slopes[lam] = scan.slope
        assert scan.sup_J >= max(q.J for q in scan.points) - 1e-12
    assert slopes[6 * math.pi] > 0 > slopes[10 * math.pi]


def test_family_center_of_mass_tracks_curve():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 1024)
    curve, _ = default_family_curve(dom)
    eps0 = 0.2
    for th in (0.0, 2.1):
        cx, cy = curve(th)
        u = build_family_field(dom, (cx, cy), eps0, 0.99)
        from mfelab.diagnostics import center_of_mass
        mx, my = center_of_mass(u)
        assert math.hypot(mx - cx, my - cy) <= 2 * eps0


def test_default_curve_holed_rectangle():
    dom = grid.build_rectangle_with_hole(3.0, 2.0, (1.0, 0.75, 2.0, 1.25), 1 / 16)
    curve, eps0 = default_family_curve(dom)
    assert eps0 > 0
    for th in np.linspace(0, 2 * math.pi, 64):
        assert dom.distance_to_boundary_point(*curve(th)) > 2.9 * eps0


# ---------------------------------------------------------------------------
# membership certificate


def test_membership_uniform_square():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 64)
    wit = improved_mt_membership(zero_field(dom), 0.25, 0.25)
    assert wit is not None
    assert wit.mass_a >= 0.25 and wit.mass_b >= 0.25 and wit.distance >= 0.25


def test_membership_single_concentration():
    dom = grid.build_disk_2d(1.0, 1 / 32)
    r2 = dom.coords[:, 0] ** 2 + dom.coords[:, 1] ** 2
    u = Field(dom, 2.0 * np.log(1e4 / (1.0 + 1e4 * r2)))
    assert improved_mt_membership(u, 0.25, 0.25) is None


def test_membership_two_bumps():
    dom = grid.build_rectangle(1.0, 1.0, 1 / 64)
    v = np.zeros(dom.n)
    for cx, cy in ((0.25, 0.5), (0.75, 0.5)):
        r2 = (dom.coords[:, 0] - cx) ** 2 + (dom.coords[:, 1] - cy) ** 2
        v += np.maximum(2 * np.log(1e3 / (1 + 1e3 * r2 / 0.01)), 0.0)
    wit = improved_mt_membership(Field(dom, v), 0.3, 0.2)
    assert wit is not None
    assert wit.distance >= 0.2


def test_membership_validation():
    dom = square()
    with pytest.raises(ValueError):
        improved_mt_membership(zero_field(dom), 0.8, 0.1)
    with pytest.raises(ValueError):
        improved_mt_membership(zero_field(dom), 0.2, -0.1)
