"""Residual, Jacobian, and damped Newton solver for the two-intensity
mean field equation

    -Delta u = lam * ( rho_1(u) + sigma * gamma * rho_gamma(u) ),
    rho_a(u) = e^{a u} / int_Omega e^{a u},   u = 0 on the boundary,

plus the positive/negative-part splitting used to monitor the gamma < 0
(asymmetric sinh) regime.  All exponentials are evaluated through a shared
max shift, so blow-up amplitudes far beyond 700 stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import DiscreteDomain, Field, LinearSolveError

NEWTON_TOL = 1e-10
_MIN_STEP = 2.0 ** -20


@dataclass(frozen=True)
class Params:
    """Physical parameters: lam >= 0, sigma >= 0, gamma in [-1, 1)."""

    lam: float
    sigma: float
    gamma: float

    def __post_init__(self):
        if not self.lam >= 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not (-1.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma out of [-1,1), got {self.gamma}")

    def with_lam(self, lam: float) -> "Params":
        return replace(self, lam=lam)


def convert_tau_form(tau: float, lambda_tilde: float, gamma: float) -> Params:
    """Map the intensity-split form (tau, lambda_tilde) to (lam, sigma):
    lam = lambda_tilde * tau, sigma = (1 - tau) / tau."""
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau out of (0,1], got {tau}")
    if lambda_tilde < 0.0:
        raise ValueError(f"lambda_tilde must be nonnegative, got {lambda_tilde}")
    return Params(lam=lambda_tilde * tau, sigma=(1.0 - tau) / tau, gamma=gamma)


def tau_form(p: Params) -> tuple[float, float]:
    """Inverse map: tau = 1/(1+sigma), lambda_tilde = lam*(1+sigma)."""
    tau = 1.0 / (1.0 + p.sigma)
    return tau, p.lam * (1.0 + p.sigma)


@dataclass(frozen=True)
class NewtonReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    damping_history: tuple[float, ...]
    message: str = ""


# ---------------------------------------------------------------------------
# densities and residual


def density_values(dom: DiscreteDomain, values: np.ndarray, alpha: float) -> np.ndarray:
    p = alpha * values
    m = p.max()
    e = np.exp(p - m)
    return e / np.dot(dom.quad_w, e)


def density(u: Field, alpha: float) -> Field:
    """Normalized density e^{alpha u} / int e^{alpha u}; integrates to 1."""
    return Field(u.domain, density_values(u.domain, u.values, alpha))


def log_int_exp(u: Field, alpha: float) -> float:
    """Overflow-safe ln int_Omega e^{alpha u}."""
    p = alpha * u.values
    m = float(p.max())
    return m + float(np.log(np.dot(u.domain.quad_w, np.exp(p - m))))


def rhs_values(dom: DiscreteDomain, values: np.ndarray, p: Params) -> np.ndarray:
    """lam*(rho_1 + sigma*gamma*rho_gamma).  The gamma term is skipped when
    sigma*gamma == 0 so the sigma=0 path reduces bit-for-bit to the
    single-intensity equation."""
    out = p.lam * density_values(dom, values, 1.0)
    sg = p.sigma * p.gamma
    if sg != 0.0:
        out = out + p.lam * sg * density_values(dom, values, p.gamma)
    return out


def residual_values(dom: DiscreteDomain, values: np.ndarray, p: Params) -> np.ndarray:
    return dom.apply_neg_laplacian(values) - rhs_values(dom, values, p)


def residual(u: Field, p: Params) -> Field:
    """F(u) = -Delta u - lam*(rho_1 + sigma*gamma*rho_gamma); zero at solutions."""
    return Field(u.domain, residual_values(u.domain, u.values, p))


def jacobian_apply(u: Field, p: Params, v: Field) -> Field:
    """Directional derivative of the residual: diagonal plus one rank-one
    correction per intensity."""
    dom = u.domain
    out = dom.apply_neg_laplacian(v.values)
    r1 = density_values(dom, u.values, 1.0)
    out -= p.lam * (r1 * v.values - r1 * dom.wdot(r1, v.values))
    sg2 = p.sigma * p.gamma * p.gamma
    if sg2 != 0.0:
        rg = density_values(dom, u.values, p.gamma)
        out -= p.lam * sg2 * (rg * v.values - rg * dom.wdot(rg, v.values))
    return Field(dom, out)


def dense_jacobian(u: Field, p: Params) -> np.ndarray:
    """Dense Jacobian assembly; test oracle only, O(n^2) memory."""
    dom = u.domain
    n = dom.n
    jac = dom.laplacian_csr().toarray()
    r1 = density_values(dom, u.values, 1.0)
    jac -= p.lam * (np.diag(r1) - np.outer(r1, dom.quad_w * r1))
    sg2 = p.sigma * p.gamma * p.gamma
    if sg2 != 0.0:
        rg = density_values(dom, u.values, p.gamma)
        jac -= p.lam * sg2 * (np.diag(rg) - np.outer(rg, dom.quad_w * rg))
    return jac


# ---------------------------------------------------------------------------
# linearized solves: sparse LU of the local part + rank-two Woodbury update


class JacobianSolver:
    """Factorization of J(u) = A + U V^T with A = -Delta - lam*diag(rho_1)
    - lam*sigma*gamma^2*diag(rho_gamma) and one rank-one term per intensity."""

    def __init__(self, u: Field, p: Params):
        dom = u.domain
        self.u = u
        self.p = p
        r1 = density_values(dom, u.values, 1.0)
        sg2 = p.sigma * p.gamma * p.gamma
        diag = -p.lam * r1
        cols_u = [p.lam * r1]
        cols_v = [dom.quad_w * r1]
        if sg2 != 0.0:
            rg = density_values(dom, u.values, p.gamma)
            diag = diag - p.lam * sg2 * rg
            cols_u.append(p.lam * sg2 * rg)
            cols_v.append(dom.quad_w * rg)
        mat = (dom.laplacian_csr() + sp.diags(diag)).tocsc()
        try:
            self.lu = spla.splu(mat)
        except RuntimeError as exc:
            raise LinearSolveError(f"LU factorization failed: {exc}", np.inf) from exc
        self.U = np.column_stack(cols_u)
        Z = self.lu.solve(self.U)
        self.V = np.column_stack(cols_v)
        self.S = np.eye(self.U.shape[1]) + self.V.T @ Z
        self.Z = Z

    def solve(self, b: np.ndarray, check: bool = True) -> np.ndarray:
        y = self.lu.solve(b)
        x = y - self.Z @ np.linalg.solve(self.S, self.V.T @ y)
        if check:
            bn = np.linalg.norm(b)
            if bn > 0.0:
                jx = jacobian_apply(self.u, self.p, Field(self.u.domain, x)).values
                res = np.linalg.norm(jx - b) / bn
                if res > 1e-6:
                    raise LinearSolveError("Jacobian solve missed tolerance", res)
        return x


# ---------------------------------------------------------------------------
# damped Newton


def newton_solve(u0: Field, p: Params, tol: float = NEWTON_TOL,
                 max_iter: int = 30) -> tuple[Field, NewtonReport]:
    """Damped Newton iteration on the residual sup norm.

    Backtracking halves the step until the residual norm strictly
    decreases (floor 2^-20); each accepted step is therefore monotone.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    dom = u0.domain
    u = u0.values.copy()
    fval = residual_values(dom, u, p)
    fnorm = float(np.abs(fval).max())
    history: list[float] = []

    for it in range(max_iter):
        if fnorm <= tol:
            return Field(dom, u), NewtonReport(True, it, fnorm, tuple(history))
        solver = JacobianSolver(Field(dom, u), p)
        step = solver.solve(-fval)
        t = 1.0
        while t >= _MIN_STEP:
            u_try = u + t * step
            f_try = residual_values(dom, u_try, p)
            n_try = float(np.abs(f_try).max())
            if n_try < fnorm:
                u, fval, fnorm = u_try, f_try, n_try
                history.append(t)
                break
            t *= 0.5
        else:
            return Field(dom, u), NewtonReport(
                False, it, fnorm, tuple(history),
                message="line search hit the step floor without residual decrease")

    converged = fnorm <= tol
    msg = "" if converged else f"no convergence in {max_iter} iterations"
    return Field(dom, u), NewtonReport(converged, max_iter, fnorm, tuple(history), msg)


# ---------------------------------------------------------------------------
# positive/negative part splitting (gamma < 0 monitoring device)


def split_solution(u: Field, p: Params) -> tuple[Field, Field, Field]:
    """Split u = u_plus - u_minus with u_plus = G*(lam rho_1),
    u_minus = G*(lam sigma |gamma| rho_gamma), and the weight e^{-u_minus}.

    Only meaningful for gamma < 0; u_minus stays bounded along blow-up
    branches while u_plus carries the concentration.
    """
    if p.gamma >= 0.0:
        raise ValueError("splitting requires gamma < 0 (asymmetric sinh regime)")
    dom = u.domain
    r1 = density_values(dom, u.values, 1.0)
    u_plus = dom.poisson_solve(p.lam * r1)
    rg = density_values(dom, u.values, p.gamma)
    u_minus = dom.poisson_solve(p.lam * p.sigma * abs(p.gamma) * rg)
    weight = np.exp(-u_minus)
    return Field(dom, u_plus), Field(dom, u_minus), Field(dom, weight)
