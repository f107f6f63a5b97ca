"""Gradient-variance study for smoothed logistic regression, and the radius table."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import expit

from .. import _parallel
from ..core import radius_sq
from ..sampler import derive_seed, sample_isotropic
from .report import ExperimentReport

__all__ = [
    "LogRegConfig",
    "logreg_dataset",
    "bce_grad",
    "smoothed_grad",
    "run_logreg_variance",
    "run_radius_curve",
    "radius_turning_point",
]


@dataclass(frozen=True)
class LogRegConfig:
    """Grid and sizes of the variance study.

    ``rho`` scales the perturbation (``rho = 0`` gives the deterministic
    gradient). With ``normalize_by_radius`` the q < 1 perturbations are
    divided by R(q, D) as in q-VSGD; by default they are used unnormalized.
    """

    dims: tuple = (10, 50, 200)
    qs: tuple = (0.0, 0.5, 0.8, 1.0)
    N: int = 2000
    S: int = 8
    reps: int = 50
    seed: int = 0
    rho: float = 1.0
    normalize_by_radius: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "qs", tuple(float(q) for q in self.qs))
        if not self.dims or not self.qs:
            raise ValueError("dims and qs must be nonempty")
        if min(self.dims) < 1:
            raise ValueError("dimensions must be >= 1")
        if any(not 0.0 <= q <= 1.0 for q in self.qs):
            raise ValueError(f"qs must lie in [0, 1], got {self.qs}")
        if self.S < 1 or self.reps < 3 or self.N < 1:
            raise ValueError("need S >= 1, reps >= 3 (for the jackknife) and N >= 1")
        if not self.rho >= 0:
            raise ValueError("rho must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"], d["qs"] = list(self.dims), list(self.qs)
        return d


def logreg_dataset(dim: int, N: int, seed: int):
    """x_i ~ N(0, I), w* ~ N(0, I), y_i ~ Bernoulli(sigmoid(x_i . w*))."""
    rng = np.random.default_rng([int(seed), int(dim), int(N)])
    X = rng.standard_normal((N, dim))
    w_star = rng.standard_normal(dim)
    y = (rng.random(N) < expit(X @ w_star)).astype(float)
    return X, y, w_star


def bce_grad(X: np.ndarray, y: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Gradient of the mean binary cross-entropy at each row of W, shape (K, D)."""
    W = np.atleast_2d(W)
    resid = expit(X @ W.T) - y[:, None]  # (N, K)
    return (resid.T @ X) / X.shape[0]


def smoothed_grad(X, y, w, q: float, S: int, seed: int, rho: float = 1.0, normalize_by_radius: bool = False):
    """(1/S) sum_k grad f(w + eps_k) with eps_k from the isotropic q-Gaussian (normal at q = 1)."""
    D = X.shape[1]
    eps = sample_isotropic(D, q, S, seed, workers=1)
    scale = rho
    if normalize_by_radius and q < 1.0:
        scale = rho / math.sqrt(radius_sq(q, D))
    return bce_grad(X, y, w + scale * eps).mean(axis=0)


def _jackknife_se(G: np.ndarray) -> float:
    """Jackknife standard error of mean_j Var_r(G[r, j]) over repetitions r."""
    R = G.shape[0]
    s1 = G.sum(axis=0)
    s2 = (G * G).sum(axis=0)
    # Leave-one-out variances per coordinate, all at once.
    n = R - 1
    m_loo = (s1[None, :] - G) / n
    v_loo = ((s2[None, :] - G * G) - n * m_loo**2) / (n - 1)
    stat = v_loo.mean(axis=1)
    return float(math.sqrt((R - 1) / R * np.sum((stat - stat.mean()) ** 2)))


def run_logreg_variance(cfg: LogRegConfig, workers: int | None = None) -> ExperimentReport:
    """Mean per-coordinate variance of the S-sample smoothed gradient at w*.

    Repetition r of dimension D uses the seed derive_seed(seed, D, r) for
    every q, so the arms share directions and normals (common random numbers).
    """
    t0 = time.perf_counter()
    rows = []
    for D in cfg.dims:
        X, y, w_star = logreg_dataset(D, cfg.N, cfg.seed)
        for q in cfg.qs:

            def rep(r, q=q):
                return smoothed_grad(
                    X, y, w_star, q, cfg.S, derive_seed(cfg.seed, D, r), cfg.rho, cfg.normalize_by_radius
                )

            G = np.stack(_parallel.ordered_map(rep, cfg.reps, workers))
            # Centering on the first repetition keeps a deterministic arm (rho = 0) at exactly zero.
            var = (G - G[0]).var(axis=0, ddof=1)
            rows.append(
                {
                    "D": D,
                    "q": q,
                    "mean_coord_variance": float(var.mean()),
                    "stderr": _jackknife_se(G),
                    "S": cfg.S,
                    "reps": cfg.reps,
                }
            )
    return ExperimentReport(
        experiment="logreg_variance",
        config=cfg.to_dict(),
        variance=rows,
        timings={"total_s": time.perf_counter() - t0},
    )


def run_radius_curve(qs, d_max: int, dims=None) -> list[dict]:
    """Rows {q, D, radius, radius_sq} for D = 1..d_max (or the given ``dims``).

    For fixed q the radius is not monotone in D: it first shrinks, reaches a
    minimum near D ~ 3.7 m and grows from then on. The table is checked to be
    finite and to have exactly this shape (nonincreasing, then increasing).
    """
    qs = [float(q) for q in qs]
    if any(not q < 1.0 for q in qs):
        raise ValueError("the radius is only defined for q < 1")
    dims = list(range(1, int(d_max) + 1)) if dims is None else sorted({int(d) for d in dims})
    rows = []
    for q in qs:
        r2 = np.array([radius_sq(q, D) for D in dims])
        if not np.all(np.isfinite(r2)):
            raise ArithmeticError(f"non-finite radius at q={q}")
        k = int(np.argmin(r2))
        d = np.diff(r2)
        if np.any(d[:k] > 0) or np.any(d[k:] <= 0):
            raise ArithmeticError(f"radius at q={q} is not decreasing-then-increasing in D")
        for D, v in zip(dims, r2.tolist()):
            rows.append({"q": q, "D": D, "radius": math.sqrt(v), "radius_sq": v})
    return rows


def radius_turning_point(q: float, d_max: int = 10**6) -> int:
    """Dimension in 1..d_max at which R^2(q, D) is smallest."""
    lo, hi = 1, int(d_max)
    # R^2 is unimodal in D, so a ternary search on the integers suffices.
    while hi - lo > 2:
        a = lo + (hi - lo) // 3
        b = hi - (hi - lo) // 3
        if radius_sq(q, a) < radius_sq(q, b):
            hi = b
        else:
            lo = a
    return min(range(lo, hi + 1), key=lambda D: radius_sq(q, D))
