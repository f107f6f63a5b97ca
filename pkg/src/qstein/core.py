"""Bounded-support q-Gaussian distributions and their escort laws.

A q-Gaussian with ``q < 1`` is an elliptical law on the ellipsoid
``s(x) = (x - mu)^T Sigma^{-1} (x - mu) < R^2`` with density

    p(x) = |Sigma|^{-1/2} ((R^2 - s(x)) / (2m))^m,      m = 1 / (1 - q),

where the support radius ``R`` depends only on ``q`` and the dimension.
``q = 1`` is kept as a tagged special case that dispatches to the ordinary
multivariate normal.

The scale matrix is always stored through its lower-triangular Cholesky
factor ``L`` (``Sigma = L L^T``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.special import gammaln

__all__ = [
    "Q_MAX",
    "OUTSIDE_SUPPORT",
    "QGaussian",
    "EscortLaw",
    "RadialLaw",
    "Moments",
    "UnsupportedRegimeError",
    "radius_sq",
    "escort",
    "radial_law",
    "moments",
    "mahalanobis_sq",
    "log_density",
    "in_support",
]

# Largest admissible q below the Gaussian limit; m > 1e8 makes (R^2 - s)^m meaningless.
Q_MAX = 1.0 - 1e-8

_LOG_PI = math.log(math.pi)


class UnsupportedRegimeError(ValueError):
    """Raised for entropic indices outside the bounded-support regime."""


class _OutsideSupport(float):
    """Log-density of a point on or beyond the support boundary.

    Behaves as ``-inf`` in arithmetic, but is a distinct singleton so callers
    can tell a support miss from an underflow (``x is OUTSIDE_SUPPORT``).
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls, float("-inf"))
        return cls._instance

    def __repr__(self):
        return "OUTSIDE_SUPPORT"

    def __reduce__(self):
        return (_OutsideSupport, ())


OUTSIDE_SUPPORT = _OutsideSupport()


def _check_q(q: float) -> float:
    q = float(q)
    if not math.isfinite(q):
        raise ValueError(f"q must be finite, got {q!r}")
    if q > 1.0:
        raise UnsupportedRegimeError(
            f"q={q} > 1 is the heavy-tailed (Pearson VII) regime, which is not supported; "
            "only bounded-support q-Gaussians (q < 1) and the Gaussian limit q = 1 are implemented "
            "(heavy tails are left as future work)"
        )
    if Q_MAX < q < 1.0:
        raise UnsupportedRegimeError(
            f"q={q} is too close to 1 (m = 1/(1-q) > 1e8); use q <= {Q_MAX!r} or exactly q = 1"
        )
    return q


def _log_radius_sq_powered(q: float, dim: int) -> float:
    """log R^2 from R^2 = [(2m)^m Z]^{2/(2m+D)}, Z = Gamma(D/2+m+1) / (pi^{D/2} Gamma(m+1))."""
    m = 1.0 / (1.0 - q)
    log_z = gammaln(0.5 * dim + m + 1.0) - 0.5 * dim * _LOG_PI - gammaln(m + 1.0)
    return 2.0 / (2.0 * m + dim) * (m * math.log(2.0 * m) + log_z)


def _log_radius_sq_expanded(q: float, dim: int) -> float:
    """log R^2 written directly in q, with (2-q)/(1-q) in place of m+1."""
    a = (2.0 - q) / (1.0 - q)
    inner = (
        gammaln(0.5 * dim + a)
        - 0.5 * dim * _LOG_PI
        - gammaln(a)
        + math.log(2.0 / (1.0 - q)) / (1.0 - q)
    )
    return 2.0 * (1.0 - q) / (2.0 + dim * (1.0 - q)) * inner


def radius_sq(q: float, dim: int) -> float:
    """Squared support radius R^2(q, D) of the standard q-Gaussian.

    Evaluated in log space so that very large ``dim`` or ``m`` cannot overflow.
    Both closed forms of the radius are computed and must agree.

    Raises:
        UnsupportedRegimeError: if ``q >= 1`` (the Gaussian limit has no radius).
    """
    q = _check_q(q)
    if q == 1.0:
        raise UnsupportedRegimeError("q = 1 is the Gaussian limit; its support is unbounded")
    dim = int(dim)
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    lr1 = _log_radius_sq_powered(q, dim)
    lr2 = _log_radius_sq_expanded(q, dim)
    # The two forms differ only by rounding; a larger gap means one of them is wrong.
    if abs(lr1 - lr2) > 1e-10 * max(1.0, abs(lr1)):
        raise ArithmeticError(f"radius forms disagree for q={q}, D={dim}: {lr1} vs {lr2}")
    return math.exp(lr1)


def _as_factor(sigma_factor, dim: int) -> np.ndarray:
    L = np.array(sigma_factor, dtype=float, copy=True)
    if L.ndim == 0:
        L = L.reshape(1, 1)
    if L.shape != (dim, dim):
        raise ValueError(f"sigma_factor must be {dim}x{dim}, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValueError("sigma_factor has non-finite entries")
    if np.any(np.triu(L, 1) != 0.0):
        raise ValueError("sigma_factor must be lower triangular")
    if np.any(np.diag(L) <= 0.0):
        raise ValueError("sigma_factor must have a strictly positive diagonal")
    return L


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QGaussian:
    """Bounded-support q-Gaussian N_q(mu, Sigma) with Sigma = L L^T.

    ``q = 1`` gives the multivariate normal N(mu, Sigma); then ``m`` and
    ``radius_sq`` are infinite. Derived fields are recomputed at construction
    and the instance is immutable.
    """

    mu: np.ndarray
    sigma_factor: np.ndarray
    q: float
    m: float = field(init=False)
    radius_sq: float = field(init=False)
    log_normalizer: float = field(init=False)
    log_det_sigma: float = field(init=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mu, dtype=float, copy=True))
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError(f"mu must be a non-empty vector, got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu has non-finite entries")
        dim = mu.size
        L = _as_factor(self.sigma_factor, dim)
        q = _check_q(self.q)
        log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
        if q == 1.0:
            m = math.inf
            r2 = math.inf
            log_norm = -0.5 * dim * math.log(2.0 * math.pi) - 0.5 * log_det
        else:
            m = 1.0 / (1.0 - q)
            r2 = radius_sq(q, dim)
            log_norm = -m * math.log(2.0 * m) - 0.5 * log_det
        set_ = object.__setattr__
        set_(self, "mu", _frozen(mu))
        set_(self, "sigma_factor", _frozen(L))
        set_(self, "q", q)
        set_(self, "m", m)
        set_(self, "radius_sq", r2)
        set_(self, "log_normalizer", log_norm)
        set_(self, "log_det_sigma", log_det)

    @classmethod
    def from_scale(cls, mu, sigma, q: float) -> "QGaussian":
        """Build from a dense symmetric positive-definite scale matrix."""
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if not np.allclose(sigma, sigma.T, rtol=1e-12, atol=0.0):
            raise ValueError("scale matrix must be symmetric")
        try:
            L = linalg.cholesky(sigma, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("scale matrix is not positive definite") from exc
        return cls(mu, L, q)

    @classmethod
    def standard(cls, dim: int, q: float) -> "QGaussian":
        """Isotropic instance N_q(0, I_D)."""
        return cls(np.zeros(dim), np.eye(dim), q)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def is_gaussian(self) -> bool:
        return self.q == 1.0

    @property
    def exponent(self) -> float:
        """Power of (R^2 - s) in the density."""
        return self.m

    @property
    def base(self) -> "QGaussian":
        return self

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_factor @ self.sigma_factor.T

    def log_density(self, x):
        return log_density(self, x)

    def density(self, x):
        return np.exp(log_density(self, x))

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma_factor_rows": self.sigma_factor.tolist(),
            "q": self.q,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "QGaussian":
        unknown = set(d) - {"mu", "sigma_factor_rows", "q"}
        if unknown:
            raise ValueError(f"unknown keys in q-Gaussian record: {sorted(unknown)}")
        return cls(d["mu"], d["sigma_factor_rows"], d["q"])

    @classmethod
    def from_json(cls, text: str) -> "QGaussian":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"QGaussian(dim={self.dim}, q={self.q!r}, radius_sq={self.radius_sq!r})"


def mahalanobis_sq(p, x) -> np.ndarray:
    """s(x) = (x - mu)^T Sigma^{-1} (x - mu) for points stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise ValueError(f"expected points of dimension {p.dim}, got trailing axis {x.shape[-1]}")
    diff = (x - p.mu).reshape(-1, p.dim)
    z = linalg.solve_triangular(p.sigma_factor, diff.T, lower=True)
    return np.einsum("ij,ij->j", z, z).reshape(x.shape[:-1])


def in_support(p, x) -> np.ndarray:
    """Boolean mask of points strictly inside the support."""
    s = mahalanobis_sq(p, x)
    if p.is_gaussian:
        return np.ones_like(s, dtype=bool)
    return s < p.radius_sq


def _log_density_from_s(law, s: np.ndarray) -> np.ndarray:
    if law.is_gaussian:
        return law.log_normalizer - 0.5 * s
    gap = law.radius_sq - s
    out = np.full(s.shape, -np.inf)
    inside = gap > 0.0
    out[inside] = law.log_normalizer + law.exponent * np.log(gap[inside])
    return out


def log_density(law, x):
    """Log-density of a q-Gaussian or escort law.

    A single point (shape ``(D,)``) returns a float, or ``OUTSIDE_SUPPORT``
    when ``s(x) >= R^2``. Stacked points return an array with ``-inf`` at
    exterior points; use :func:`in_support` for the mask.
    """
    x = np.asarray(x, dtype=float)
    s = mahalanobis_sq(law, x)
    out = _log_density_from_s(law, np.atleast_1d(s))
    if x.ndim == 1:
        val = float(out[0])
        return OUTSIDE_SUPPORT if val == -math.inf else val
    return out.reshape(s.shape)


def _pearson2_log_normalizer(dim: int, exponent: float, r2: float, log_det: float) -> float:
    """-log of the integral of (R^2 - s(x))^a over the ellipsoid s(x) < R^2."""
    half = 0.5 * dim
    log_integral = (
        0.5 * log_det
        + half * _LOG_PI
        + (half + exponent) * math.log(r2)
        + gammaln(exponent + 1.0)
        - gammaln(half + exponent + 1.0)
    )
    return -log_integral


@dataclass(frozen=True, eq=False)
class EscortLaw:
    """k-th associated law of a q-Gaussian: density proportional to (R^2 - s)^{m+k}.

    ``order_k = 0`` is the base law, ``order_k = 1`` the (2-q)-escort p*.
    For a Gaussian base every order coincides with the base law.
    """

    base: QGaussian
    order_k: int
    log_normalizer: float = field(init=False)

    def __post_init__(self):
        k = int(self.order_k)
        if k != self.order_k or k < 0:
            raise ValueError(f"escort order must be a nonnegative integer, got {self.order_k!r}")
        object.__setattr__(self, "order_k", k)
        b = self.base
        if b.is_gaussian or k == 0:
            ln = b.log_normalizer
        else:
            ln = _pearson2_log_normalizer(b.dim, b.m + k, b.radius_sq, b.log_det_sigma)
        object.__setattr__(self, "log_normalizer", ln)

    @property
    def exponent(self) -> float:
        return self.base.m + self.order_k

    @property
    def mu(self):
        return self.base.mu

    @property
    def sigma_factor(self):
        return self.base.sigma_factor

    @property
    def radius_sq(self):
        return self.base.radius_sq

    @property
    def dim(self):
        return self.base.dim

    @property
    def is_gaussian(self):
        return self.base.is_gaussian

    @property
    def q(self):
        return self.base.q

    def log_density(self, x):
        return log_density(self, x)

    def density(self, x):
        return np.exp(log_density(self, x))


def escort(p: QGaussian, k: int = 1) -> EscortLaw:
    """Return the k-th associated (escort) law of ``p``."""
    if k < 0:
        raise ValueError(f"escort order must be >= 0, got {k}")
    return EscortLaw(p, k)


@dataclass(frozen=True)
class RadialLaw:
    """Law of s(x) = R^2 * B with B ~ Beta(alpha, beta)."""

    alpha: float
    beta: float
    radius_sq: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta shapes must be positive")

    def mean(self) -> float:
        return self.radius_sq * self.alpha / (self.alpha + self.beta)

    def var(self) -> float:
        a, b = self.alpha, self.beta
        return self.radius_sq**2 * a * b / ((a + b) ** 2 * (a + b + 1.0))

    def cdf(self, s):
        from scipy.stats import beta as beta_dist

        return beta_dist.cdf(np.asarray(s) / self.radius_sq, self.alpha, self.beta)


def radial_law(p: QGaussian, escort_order: int = 0) -> RadialLaw:
    """Squared-radius law under p (order 0) or p* (order 1)."""
    if escort_order not in (0, 1):
        raise ValueError(f"radial law is available for escort order 0 or 1, got {escort_order!r}")
    if p.is_gaussian:
        raise UnsupportedRegimeError("the Gaussian limit has a chi-square radial law, not a scaled Beta")
    return RadialLaw(0.5 * p.dim, p.m + 1.0 + escort_order, p.radius_sq)


class Moments(NamedTuple):
    E_s_p: float
    E_s_star: float
    M: float
    cov_scale: float


def moments(p: QGaussian) -> Moments:
    """Closed-form radial moments.

    Returns E_p[s], E_{p*}[s], M = E_p[R^2 - s] and the factor c with
    Cov_p(x) = c * Sigma. For the Gaussian limit E_p[s] = E_{p*}[s] = D,
    ``M`` is infinite and c = 1.
    """
    D = p.dim
    if p.is_gaussian:
        return Moments(float(D), float(D), math.inf, 1.0)
    m, r2 = p.m, p.radius_sq
    e_s = D * r2 / (D + 2.0 * (m + 1.0))
    e_star = D * r2 / (D + 2.0 * (m + 2.0))
    big_m = r2 - e_s
    cov_scale = e_s / D
    # E_p[s]/D and M/(2(m+1)) are the same quantity written two ways.
    if abs(cov_scale - big_m / (2.0 * (m + 1.0))) > 1e-12 * cov_scale:
        raise ArithmeticError("radial moment identity violated")
    return Moments(e_s, e_star, big_m, cov_scale)
