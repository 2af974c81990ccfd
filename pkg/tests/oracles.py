"""Independent oracles shared across the test suite.

Everything here is computed without touching the solver path it checks:
closed-form profiles, classical series, and plain quadrature.
"""

import math

import numpy as np

EIGHT_PI = 8.0 * math.pi

# frozen from the double-series evaluation below (801 odd terms)
SQUARE_TORSION_CENTER = 0.07367135353164544


def square_torsion_center_series(nmax: int = 801) -> float:
    """Center value of -Delta u = 1 on the unit square (u = 0 on the
    boundary) from the classical double sine series."""
    s = 0.0
    for m in range(1, nmax + 1, 2):
        sm = math.sin(m * math.pi / 2)
        for n in range(1, nmax + 1, 2):
            s += sm * math.sin(n * math.pi / 2) / (m * n * (m * m + n * n))
    return 16.0 / math.pi ** 4 * s


def bubble_lambda(delta: float) -> float:
    """Parameter value carried by the radial concentration profile."""
    return EIGHT_PI * delta / (1.0 + delta)


def bubble_delta(lam: float) -> float:
    return lam / (EIGHT_PI - lam)


def bubble_profile(r, delta: float):
    """u_delta(r) = 2 ln((1+delta)/(1+delta r^2)) on the unit disk."""
    r = np.asarray(r)
    return 2.0 * np.log((1.0 + delta) / (1.0 + delta * r * r))


def bubble_field(dom, delta: float):
    """Profile sampled on a radial grid domain."""
    from mfelab.grid import Field
    return Field(dom, bubble_profile(dom.coords[:, 0], delta))


def bubble_dirichlet_energy(delta: float) -> float:
    """0.5 * int |grad u_delta|^2 over the unit disk, closed form."""
    # |u'| = 4 delta r / (1 + delta r^2); int_0^1 r^3/(1+d r^2)^2 dr
    integral = (math.log(1.0 + delta) + 1.0 / (1.0 + delta) - 1.0) / (2.0 * delta ** 2)
    return 0.5 * 16.0 * delta ** 2 * 2.0 * math.pi * integral


def bubble_exp_integral(delta: float) -> float:
    """int_disk e^{u_delta} = pi (1 + delta), closed form."""
    return math.pi * (1.0 + delta)


def bubble_ball_mass_fraction(delta: float, rho: float) -> float:
    """Fraction of the normalized e^{u_delta} measure inside B(0, rho):
    (1+delta) rho^2 / (1 + delta rho^2)."""
    return (1.0 + delta) * rho * rho / (1.0 + delta * rho * rho)


def relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)
