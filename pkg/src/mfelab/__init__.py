"""Numerical laboratory for the two-intensity mean field equation

    -Delta u = lambda * ( e^u / int e^u  +  sigma * gamma * e^{gamma u} / int e^{gamma u} )

on grid-aligned planar domains with zero Dirichlet data: damped Newton
solves, pseudo-arclength branch tracing toward blow-up, concentration and
mass diagnostics, and the associated variational machinery.
"""

__version__ = "0.1.0"

from .grid import (
    DiscreteDomain,
    DomainError,
    Field,
    LinearSolveError,
    apply_laplacian,
    build_domain,
    integrate,
    solve_poisson,
)
from .core import (
    NewtonReport,
    Params,
    convert_tau_form,
    density,
    jacobian_apply,
    newton_solve,
    residual,
    split_solution,
    tau_form,
)

__all__ = [
    "DiscreteDomain",
    "DomainError",
    "Field",
    "LinearSolveError",
    "NewtonReport",
    "Params",
    "apply_laplacian",
    "build_domain",
    "convert_tau_form",
    "density",
    "integrate",
    "jacobian_apply",
    "newton_solve",
    "residual",
    "solve_poisson",
    "split_solution",
    "tau_form",
    "__version__",
]
