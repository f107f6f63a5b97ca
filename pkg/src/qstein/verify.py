"""Identity battery: quadrature and seeded Monte Carlo checks for one (q, D <= 2).

Each check yields a :class:`Check` row with the observed discrepancy and the
tolerance it was held to. The same battery backs ``qstein verify`` and the
acceptance tests.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import battery
from .core import QGaussian, escort, mahalanobis_sq, moments
from .estimators import grad_mu, grad_sigma, stein_lhs, stein_rhs
from .oracle import OracleDimensionError, QuadratureSpec, bonnet_sides, expect_quadrature, price_sides, stein_sides
from .sampler import GaussianLimitWarning, derive_seed, sample

__all__ = ["Check", "TOLERANCES", "default_law", "quadrature_checks", "mc_checks", "run_battery", "format_table"]

TOLERANCES = {
    "normalization": 1e-8,
    "radial_moment": 1e-8,
    "stein_quadrature": 1e-7,
    "bonnet_quadrature": 1e-6,
    "price_quadrature": 1e-6,
    "mc_sigmas": 4.0,
}


@dataclass(frozen=True)
class Check:
    name: str
    discrepancy: float
    tolerance: float
    unit: str = "abs"  # "abs" or "se" (discrepancy in standard errors)

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.discrepancy) and self.discrepancy <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "unit": self.unit,
            "passed": self.passed,
        }


def default_law(q: float, dim: int) -> QGaussian:
    """A fixed non-isotropic test law with D in {1, 2}."""
    if dim == 1:
        return QGaussian(np.array([0.3]), np.array([[1.2]]), q)
    if dim == 2:
        return QGaussian(np.array([0.3, -0.2]), np.array([[1.0, 0.0], [0.4, 0.8]]), q)
    raise OracleDimensionError(f"quadrature oracles support D <= 2, got D={dim}")


def _maxabs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def quadrature_checks(p: QGaussian, functions=None, spec: QuadratureSpec | None = None) -> list[Check]:
    """Deterministic checks: normalization, radial moments, Stein, Bonnet and Price."""
    if p.dim > 2:
        raise OracleDimensionError(f"quadrature oracles support D <= 2, got D={p.dim}")
    names = list(functions or battery.BATTERY)
    T = TOLERANCES
    one = lambda x: np.ones(x.shape[0])  # noqa: E731
    out = [Check("normalization[p]", abs(float(expect_quadrature(p, one, spec)) - 1.0), T["normalization"])]
    mom = moments(p)
    s_of = lambda x: mahalanobis_sq(p, x)  # noqa: E731
    out.append(Check("E_p[s]", abs(float(expect_quadrature(p, s_of, spec)) - mom.E_s_p), T["radial_moment"]))
    if not p.is_gaussian:
        star = escort(p, 1)
        out.append(
            Check("normalization[p*]", abs(float(expect_quadrature(star, one, spec)) - 1.0), T["normalization"])
        )
        out.append(
            Check("E_p*[s]", abs(float(expect_quadrature(star, s_of, spec)) - mom.E_s_star), T["radial_moment"])
        )
    for name in names:
        f = battery.make(name, p.dim)
        sides = stein_sides(p, f, spec)
        for key in ("rhs_escort", "rhs_p_only", "rhs_cov"):
            out.append(Check(f"stein[{name}] lhs~{key}", _maxabs(sides["lhs"], sides[key]), T["stein_quadrature"]))
        b = bonnet_sides(p, f, spec)
        out.append(Check(f"bonnet[{name}] fd~formula", _maxabs(b["fd"], b["formula"]), T["bonnet_quadrature"]))
        if f.hess is not None:
            pr = price_sides(p, f, spec)
            out.append(Check(f"price[{name}] fd~formula", _maxabs(pr["fd"], pr["formula"]), T["price_quadrature"]))
    return out


# Accuracy credited to the quadrature target, relative to 1 + |target|. It only
# matters when the contributions are constant (e.g. a quadratic's Hessian) and
# the standard error is pure rounding noise.
ORACLE_RTOL = 1e-9


def _z(est, target) -> float:
    """Largest |estimate - target| / (combined standard error) over components."""
    target = np.asarray(target, dtype=float)
    diff = np.abs(np.asarray(est.value) - target)
    se = np.sqrt(np.asarray(est.stderr) ** 2 + (ORACLE_RTOL * (1.0 + np.abs(target))) ** 2)
    return float(np.max(diff / se))


def mc_checks(p: QGaussian, S: int, seed: int, functions=None, spec: QuadratureSpec | None = None) -> list[Check]:
    """Seeded Monte Carlo checks of the Stein sides and the Bonnet/Price estimators against quadrature.

    One base batch and one escort batch are shared by all functions.
    Each row reports the largest component deviation in standard errors.
    """
    names = list(functions or battery.BATTERY)
    k = TOLERANCES["mc_sigmas"]
    base = sample(p, S, derive_seed(seed, 0), "base")
    if p.is_gaussian:
        star = base
    else:
        star = sample(p, S, derive_seed(seed, 1), "escort")
    out = []
    for name in names:
        f = battery.make(name, p.dim)
        sides = stein_sides(p, f, spec)
        lhs = stein_lhs(p, f, base)
        rhs_e = stein_rhs(p, f, star, "escort_batch")
        rhs_p = stein_rhs(p, f, base, "p_only_reweighted")
        out.append(Check(f"mc stein[{name}] lhs~oracle", _z(lhs, sides["lhs"]), k, "se"))
        out.append(Check(f"mc stein[{name}] escort_batch~oracle", _z(rhs_e, sides["rhs_escort"]), k, "se"))
        out.append(Check(f"mc stein[{name}] p_only~oracle", _z(rhs_p, sides["rhs_escort"]), k, "se"))
        # Both MC sides against each other, with the combined standard error.
        comb = np.sqrt(lhs.stderr**2 + rhs_e.stderr**2)
        diff = np.abs(lhs.value - rhs_e.value)
        out.append(Check(f"mc stein[{name}] lhs~escort_batch", float(np.max(diff / comb)), k, "se"))
        bon = grad_mu(p, f, S, 0, batch=base)
        out.append(Check(f"mc bonnet[{name}]~oracle", _z(bon, expect_quadrature(p, f.grad, spec)), k, "se"))
        if f.hess is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", GaussianLimitWarning)
                pri = grad_sigma(p, f, S, 0, batch=star)
            target = 0.5 * moments(p).cov_scale * expect_quadrature(escort(p, 1), f.hess, spec)
            out.append(Check(f"mc price[{name}]~oracle", _z(pri, target), k, "se"))
    return out


def run_battery(q: float, dim: int, S: int = 100_000, seed: int = 0, p: QGaussian | None = None,
                functions=None, mc: bool = True) -> list[Check]:
    """Full battery for (q, D); ``p`` overrides the default test law."""
    if dim > 2:
        raise OracleDimensionError(f"quadrature oracles support D <= 2, got D={dim}")
    p = p if p is not None else default_law(q, dim)
    checks = quadrature_checks(p, functions)
    if mc:
        checks += mc_checks(p, S, seed, functions)
    return checks


def format_table(checks: list[Check]) -> str:
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'discrepancy':>12}  {'tolerance':>10}  unit  result"]
    for c in checks:
        lines.append(
            f"{c.name:<{width}}  {c.discrepancy:12.3e}  {c.tolerance:10.1e}  {c.unit:<4}  {'PASS' if c.passed else 'FAIL'}"
        )
    return "\n".join(lines)
