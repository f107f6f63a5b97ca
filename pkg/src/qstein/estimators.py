"""Monte Carlo estimators built on the bounded-support Stein identity.

Every estimator is a plain average of per-sample contributions. The returned
:class:`GradEstimate` carries the average, the empirical per-entry variance of
the contributions (unbiased, ``ddof=1``) and, when sup-bounds of the
derivatives are known, the theoretical variance bound of the average.

Batches may be injected to compare estimators on common random numbers;
otherwise each call draws its own batch from ``seed``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .battery import TestFunction
from .core import QGaussian, moments
from .sampler import SampleBatch, sample

__all__ = [
    "GradEstimate",
    "SourceMismatchError",
    "stein_lhs",
    "stein_rhs",
    "grad_mu",
    "grad_sigma",
    "prop1_estimators",
    "gaussian_baseline_grads",
    "escort_weights",
    "json_safe",
]


class SourceMismatchError(ValueError):
    """A batch was drawn from the wrong law for the requested estimator."""


def json_safe(obj):
    """Convert arrays/floats to JSON-ready values; non-finite floats become strings."""
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class GradEstimate:
    """Output of a Monte Carlo estimator.

    ``per_entry_variance`` is the sample variance of the individual
    contributions, so ``stderr = sqrt(per_entry_variance / S)``.
    ``variance_bound`` bounds the variance of ``value`` itself.
    """

    value: np.ndarray
    per_entry_variance: np.ndarray
    S: int
    seed: int | None
    estimator: str
    variance_bound: np.ndarray | float | None = None
    extra_bounds: dict = field(default_factory=dict)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.per_entry_variance / self.S)

    def to_dict(self) -> dict:
        d = {
            "value": self.value,
            "stderr": self.stderr,
            "bound": self.variance_bound,
            "S": self.S,
            "seed": self.seed,
            "estimator": self.estimator,
        }
        if self.extra_bounds:
            d["extra_bounds"] = self.extra_bounds
        return json_safe(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, sort_keys=True)


def _summarize(contrib: np.ndarray, batch: SampleBatch | None, name: str, seed=None) -> GradEstimate:
    S = contrib.shape[0]
    value = contrib.mean(axis=0)
    var = contrib.var(axis=0, ddof=1) if S > 1 else np.zeros_like(value)
    return GradEstimate(value, var, S, batch.seed if batch is not None else seed, name)


def _require(batch: SampleBatch, p: QGaussian, source: str):
    if batch.dist is not p and not _same_law(batch.dist, p):
        raise SourceMismatchError("batch was drawn from a different distribution")
    # In the Gaussian limit base and escort coincide.
    if batch.source != source and not p.is_gaussian:
        raise SourceMismatchError(f"estimator needs a {source!r} batch, got {batch.source!r}")


def _same_law(a: QGaussian, b: QGaussian) -> bool:
    return a.q == b.q and np.array_equal(a.mu, b.mu) and np.array_equal(a.sigma_factor, b.sigma_factor)


def escort_weights(p: QGaussian, batch: SampleBatch) -> np.ndarray:
    """Per-draw weights (R^2 - s(x_k)) / M turning base draws into escort expectations."""
    if p.is_gaussian:
        return np.ones(batch.size)
    return (p.radius_sq - batch.s_values) / moments(p).M


def stein_lhs(p: QGaussian, f: TestFunction, batch: SampleBatch) -> GradEstimate:
    """Estimate E_p[(x - mu) f(x)] from a base batch."""
    _require(batch, p, "base")
    x = batch.points
    contrib = (x - p.mu) * f.value(x)[:, None]
    return _summarize(contrib, batch, "stein_lhs")


def stein_rhs(
    p: QGaussian,
    f: TestFunction,
    batch: SampleBatch,
    variant: Literal["escort_batch", "p_only_reweighted"] = "escort_batch",
) -> GradEstimate:
    """Estimate Cov_p(x) E_{p*}[grad f].

    ``escort_batch`` averages grad f over escort draws; ``p_only_reweighted``
    averages (R^2 - s) grad f / M over base draws.
    """
    mom = moments(p)
    A = mom.cov_scale * p.sigma
    if variant == "escort_batch":
        _require(batch, p, "escort")
        g = f.grad(batch.points)
    elif variant == "p_only_reweighted":
        _require(batch, p, "base")
        g = f.grad(batch.points) * escort_weights(p, batch)[:, None]
    else:
        raise ValueError(f"unknown Stein variant {variant!r}")
    return _summarize(g @ A.T, batch, f"stein_rhs[{variant}]")


def grad_mu(p: QGaussian, f: TestFunction, S: int, seed: int, batch: SampleBatch | None = None) -> GradEstimate:
    """q-Bonnet estimator of grad_mu E_p[f]: average of grad f over base draws."""
    if batch is None:
        batch = sample(p, S, seed, "base")
    _require(batch, p, "base")
    return _summarize(f.grad(batch.points), batch, "q_bonnet")


def _symmetrize(est: GradEstimate) -> GradEstimate:
    v = est.value
    est.value = 0.5 * (v + np.swapaxes(v, -1, -2))
    return est


def grad_sigma(p: QGaussian, f: TestFunction, S: int, seed: int, batch: SampleBatch | None = None) -> GradEstimate:
    """q-Price estimator of grad_Sigma E_p[f]: (E_p[s]/D) / 2 times the escort mean Hessian."""
    if f.hess is None:
        raise ValueError(f"{f.name} has no Hessian")
    if batch is None:
        source = "base" if p.is_gaussian else "escort"
        batch = sample(p, S, seed, source)
    _require(batch, p, "escort")
    scale = 0.5 * moments(p).cov_scale
    return _symmetrize(_summarize(scale * f.hess(batch.points), batch, "q_price"))


def prop1_estimators(
    p: QGaussian,
    f: TestFunction,
    S: int,
    seed: int,
    which: Literal["grad", "hess"] = "grad",
    batch: SampleBatch | None = None,
    c3: float = 2.0,
) -> GradEstimate:
    """Reweighted base-law estimators of E_{p*}[grad f] and E_{p*}[hess f].

    With a gradient bound C1 (Hessian bound C2) available, ``variance_bound``
    is (1/S) (R^2 C / M)^2 per entry. For the Hessian estimator
    ``extra_bounds`` also holds the Frobenius bound D^2 (1/S) (R^2 C2 / M)^2
    and the operator-norm diagnostic c3 (R^2 C2 / M) sqrt(log(2D) / S), whose
    constant ``c3`` is not certified.
    """
    if p.is_gaussian:
        raise ValueError("the reweighted estimators need a bounded-support q-Gaussian (q < 1)")
    if batch is None:
        batch = sample(p, S, seed, "base")
    _require(batch, p, "base")
    w = escort_weights(p, batch)
    mom = moments(p)
    if which == "grad":
        est = _summarize(f.grad(batch.points) * w[:, None], batch, "prop1_grad")
        bound_c = f.grad_bound
    elif which == "hess":
        if f.hess is None:
            raise ValueError(f"{f.name} has no Hessian")
        est = _summarize(f.hess(batch.points) * w[:, None, None], batch, "prop1_hess")
        bound_c = f.hess_bound
    else:
        raise ValueError(f"which must be 'grad' or 'hess', got {which!r}")
    if bound_c is not None and math.isfinite(bound_c):
        range_ = p.radius_sq * bound_c / mom.M
        per_entry = range_**2 / est.S
        est.variance_bound = np.full(est.value.shape, per_entry)
        if which == "hess":
            D = p.dim
            est.extra_bounds = {
                "frobenius": D * D * per_entry,
                "opnorm_expectation": c3 * range_ * math.sqrt(math.log(2 * D) / est.S),
                "c3": c3,
            }
    return est


def gaussian_baseline_grads(
    mu,
    sigma_factor,
    f: TestFunction,
    S: int,
    seed: int,
    which: Literal["mu", "sigma"] = "mu",
) -> GradEstimate:
    """Classical Bonnet (mean gradient) or Price (half mean Hessian) under N(mu, Sigma)."""
    g = QGaussian(mu, sigma_factor, 1.0)
    batch = sample(g, S, seed, "base")
    if which == "mu":
        est = _summarize(f.grad(batch.points), batch, "bonnet")
    elif which == "sigma":
        if f.hess is None:
            raise ValueError(f"{f.name} has no Hessian")
        est = _symmetrize(_summarize(0.5 * f.hess(batch.points), batch, "price"))
    else:
        raise ValueError(f"which must be 'mu' or 'sigma', got {which!r}")
    return est
