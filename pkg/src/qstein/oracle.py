"""Deterministic ground truth for D <= 2: quadrature expectations and finite differences.

Nothing here draws random numbers, and the estimators never call into this
module.

Two quadrature rules are available:

``"jacobi"`` (default)
    Nodes adapted to the (R^2 - s)^a boundary behaviour. In 1-D,
    Gauss-Jacobi(a, a) on the support interval; in 2-D, polar coordinates
    in the whitened variable z = L^{-1}(x - mu) with Gauss-Jacobi(a, 0) in
    u = |z|^2 and the periodic trapezoid rule in the angle. The density
    itself is evaluated through ``law.log_density`` and divided by the node
    weight function, so normalizing constants are checked, not assumed.
    Gaussian laws use Gauss-Hermite (tensor grid in 2-D).

``"legendre"``
    Gauss-Legendre on the support interval (1-D) or a tensor grid on the
    bounding box of the ellipse with exterior nodes zeroed (2-D). Kept as
    a cross-check; in 2-D its accuracy is limited by the kink of the
    integrand on the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy.special import roots_hermite, roots_jacobi, roots_legendre

from .core import QGaussian, escort, mahalanobis_sq, moments

__all__ = [
    "QuadratureSpec",
    "OracleDimensionError",
    "expect_quadrature",
    "self_convergence",
    "fd_grad_param",
    "expectation_in_params",
    "stein_sides",
    "bonnet_sides",
    "price_sides",
]


class OracleDimensionError(ValueError):
    """Quadrature oracles exist only for D <= 2."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Node counts for the quadrature oracle.

    ``nodes_1d`` is the count in 1-D and the radial count in 2-D;
    ``nodes_angle`` is the number of trapezoid nodes in the angle.
    """

    nodes_1d: int = 512
    nodes_angle: int = 256
    target_abs_tol: float = 1e-8
    method: Literal["jacobi", "legendre"] = "jacobi"

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.nodes_1d, 2 * self.nodes_angle, self.target_abs_tol, self.method)


DEFAULT_SPEC = QuadratureSpec()


@lru_cache(maxsize=64)
def _jacobi(n: int, a: float, b: float):
    t, w = roots_jacobi(n, a, b)
    return t, w


@lru_cache(maxsize=16)
def _legendre(n: int):
    return roots_legendre(n)


@lru_cache(maxsize=16)
def _hermite(n: int):
    return roots_hermite(n)


def _nodes(law, spec: QuadratureSpec):
    """Quadrature nodes x_i and weights c_i with sum_i c_i g(x_i) ~ integral of g(x) p(x) dx."""
    D = law.dim
    if D > 2:
        raise OracleDimensionError(f"quadrature oracles support D <= 2, got D={D}")
    L = law.sigma_factor
    mu = law.mu
    det_l = float(np.prod(np.diag(L)))

    if law.is_gaussian:
        # z = sqrt(2) t, weight exp(-t^2) per axis.
        n = spec.nodes_1d if D == 1 else spec.nodes_angle
        t, w = _hermite(min(n, 200))
        if D == 1:
            z = math.sqrt(2.0) * t[:, None]
            wt = w
            log_weight_fn = -(t**2)
        else:
            T1, T2 = np.meshgrid(t, t, indexing="ij")
            z = math.sqrt(2.0) * np.column_stack([T1.ravel(), T2.ravel()])
            wt = np.outer(w, w).ravel()
            log_weight_fn = -(T1.ravel() ** 2 + T2.ravel() ** 2)
        x = z @ L.T + mu
        jac = det_l * math.sqrt(2.0) ** D
        dens = np.exp(law.log_density(x) - log_weight_fn)
        return x, wt * jac * dens

    r2 = law.radius_sq
    R = math.sqrt(r2)
    a = law.exponent

    if spec.method == "jacobi":
        if D == 1:
            t, w = _jacobi(spec.nodes_1d, a, a)
            x = (mu[0] + L[0, 0] * R * t)[:, None]
            log_wfn = a * np.log1p(-t * t)
            c = w * L[0, 0] * R * np.exp(law.log_density(x) - log_wfn)
            return x, c
        tau, w = _jacobi(spec.nodes_1d, a, 0.0)
        u = 0.5 * r2 * (1.0 + tau)
        nth = spec.nodes_angle
        theta = 2.0 * math.pi * np.arange(nth) / nth
        rad = np.sqrt(u)
        z = np.stack(
            [np.outer(rad, np.cos(theta)).ravel(), np.outer(rad, np.sin(theta)).ravel()], axis=1
        )
        x = z @ L.T + mu
        log_wfn = np.repeat(a * np.log1p(-tau), nth)
        # dz = (1/2) du dtheta, du = (R^2/2) dtau
        jac = det_l * 0.25 * r2 * (2.0 * math.pi / nth)
        c = np.repeat(w, nth) * jac * np.exp(law.log_density(x) - log_wfn)
        return x, c

    if spec.method == "legendre":
        t, w = _legendre(spec.nodes_1d)
        if D == 1:
            x = (mu[0] + L[0, 0] * R * t)[:, None]
            c = w * L[0, 0] * R * np.exp(law.log_density(x))
            return x, c
        # Bounding box of the ellipse: |x_i - mu_i| <= R sqrt(Sigma_ii).
        half = R * np.sqrt(np.diag(L @ L.T))
        X1, X2 = np.meshgrid(mu[0] + half[0] * t, mu[1] + half[1] * t, indexing="ij")
        x = np.column_stack([X1.ravel(), X2.ravel()])
        c = np.outer(w * half[0], w * half[1]).ravel() * np.exp(law.log_density(x))
        return x, c

    raise ValueError(f"unknown quadrature method {spec.method!r}")


def expect_quadrature(law, g: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec | None = None):
    """Integral of g(x) * density(x) over the support of ``law`` (QGaussian or EscortLaw).

    ``g`` maps stacked points (n, D) to (n,) or (n, ...) arrays; the result
    has the trailing shape.
    """
    spec = spec or DEFAULT_SPEC
    x, c = _nodes(law, spec)
    vals = np.asarray(g(x), dtype=float)
    return np.tensordot(c, vals, axes=(0, 0))


def self_convergence(law, spec: QuadratureSpec | None = None) -> float:
    """|integral of p with doubled nodes - with base nodes|; should be below target_abs_tol."""
    spec = spec or DEFAULT_SPEC
    one = lambda x: np.ones(x.shape[0])  # noqa: E731
    return abs(float(expect_quadrature(law, one, spec.doubled())) - float(expect_quadrature(law, one, spec)))


def expectation_in_params(
    q: float, g: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec | None = None
) -> Callable[[np.ndarray, np.ndarray], float]:
    """E(mu, Sigma) = E_{N_q(mu, Sigma)}[g] as a function of dense parameters."""

    def E(mu, sigma):
        return expect_quadrature(QGaussian.from_scale(mu, sigma, q), g, spec)

    return E


def fd_grad_param(E, mu, sigma, which, h: float | None = None, max_shrink: int = 20):
    """Central finite difference of E(mu, Sigma) in one parameter.

    ``which`` is ``("mu", i)`` or ``("sigma", i, j)``. The step defaults to
    1e-4 (1 + |theta|). Off-diagonal Sigma entries are perturbed in the
    symmetric direction (E_ij + E_ji) / 2, which equals the partial in
    Sigma_ij when the gradient is symmetric. The step is halved while the
    perturbed Sigma fails to be positive definite.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    kind = which[0]
    if kind == "mu":
        (i,) = which[1:]
        theta = mu[i]
        h = 1e-4 * (1.0 + abs(theta)) if h is None else h
        e = np.zeros_like(mu)
        e[i] = 1.0
        return (E(mu + h * e, sigma) - E(mu - h * e, sigma)) / (2.0 * h)
    if kind == "sigma":
        i, j = which[1:]
        theta = sigma[i, j]
        h = 1e-4 * (1.0 + abs(theta)) if h is None else h
        E_ij = np.zeros_like(sigma)
        E_ij[i, j] += 0.5
        E_ij[j, i] += 0.5
        for _ in range(max_shrink):
            plus, minus = sigma + h * E_ij, sigma - h * E_ij
            if np.all(np.linalg.eigvalsh(plus) > 0) and np.all(np.linalg.eigvalsh(minus) > 0):
                return (E(mu, plus) - E(mu, minus)) / (2.0 * h)
            h *= 0.5
        raise ValueError(f"cannot perturb Sigma[{i},{j}] while keeping it positive definite")
    raise ValueError(f"unknown parameter selector {which!r}")


def stein_sides(p: QGaussian, f, spec: QuadratureSpec | None = None) -> dict:
    """Quadrature values of both sides of the Stein identity and its variants.

    Returns ``lhs`` = E_p[(x - mu) f], ``rhs_cov`` = Cov_p E_{p*}[grad f]
    with the covariance integrated directly, ``rhs_escort`` = c Sigma E_{p*}[grad f]
    and ``rhs_p_only`` = c Sigma E_p[(R^2 - s) grad f] / M.
    """
    lhs = expect_quadrature(p, lambda x: (x - p.mu) * f.value(x)[:, None], spec)
    cov = expect_quadrature(p, lambda x: np.einsum("ni,nj->nij", x - p.mu, x - p.mu), spec)
    if p.is_gaussian:
        e_grad = expect_quadrature(p, f.grad, spec)
        rhs = p.sigma @ e_grad
        return {"lhs": lhs, "rhs_cov": cov @ e_grad, "rhs_escort": rhs, "rhs_p_only": rhs}
    mom = moments(p)
    star = escort(p, 1)
    e_grad_star = expect_quadrature(star, f.grad, spec)
    e_weighted = expect_quadrature(
        p, lambda x: (p.radius_sq - mahalanobis_sq(p, x))[:, None] * f.grad(x), spec
    )
    A = mom.cov_scale * p.sigma
    return {
        "lhs": lhs,
        "rhs_cov": cov @ e_grad_star,
        "rhs_escort": A @ e_grad_star,
        "rhs_p_only": A @ e_weighted / mom.M,
    }


def bonnet_sides(p: QGaussian, f, spec: QuadratureSpec | None = None) -> dict:
    """Finite-difference gradient of E_p[f] in mu next to the quadrature of E_p[grad f]."""
    E = expectation_in_params(p.q, f.value, spec)
    fd = np.array([fd_grad_param(E, p.mu, p.sigma, ("mu", i)) for i in range(p.dim)])
    return {"fd": fd, "formula": expect_quadrature(p, f.grad, spec)}


def price_sides(p: QGaussian, f, spec: QuadratureSpec | None = None) -> dict:
    """Finite-difference gradient of E_p[f] in Sigma next to (E_p[s]/D)(1/2)E_{p*}[hess f]."""
    E = expectation_in_params(p.q, f.value, spec)
    D = p.dim
    fd = np.empty((D, D))
    for i in range(D):
        for j in range(i, D):
            fd[i, j] = fd[j, i] = fd_grad_param(E, p.mu, p.sigma, ("sigma", i, j))
    star = escort(p, 1)
    formula = 0.5 * moments(p).cov_scale * expect_quadrature(star, f.hess, spec)
    return {"fd": fd, "formula": formula}
