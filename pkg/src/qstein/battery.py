"""Built-in test functions with analytic gradients, Hessians and sup-bounds.

All callables are vectorized over a leading sample axis: ``value`` maps
(n, D) -> (n,), ``grad`` -> (n, D) and ``hess`` -> (n, D, D).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = ["TestFunction", "BATTERY", "make", "logistic_data"]


@dataclass(frozen=True)
class TestFunction:
    """A differentiable integrand f (or t) for the estimators.

    ``grad_bound`` is an upper bound on ||grad f|| over the support and
    ``hess_bound`` on the operator norm of the Hessian; either may be None
    when no finite bound is known.
    """

    __test__ = False  # not a pytest class

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    grad_bound: float | None = None
    hess_bound: float | None = None


def _poly2(dim: int) -> TestFunction:
    # f = |x|^2 + (sum x)^2 / 2 + sum_j x_j / (j+1)
    b = 1.0 / np.arange(1, dim + 1)
    H = 2.0 * np.eye(dim) + np.ones((dim, dim))

    def value(x):
        t = x.sum(axis=-1)
        return np.einsum("...j,...j->...", x, x) + 0.5 * t * t + x @ b

    def grad(x):
        return 2.0 * x + x.sum(axis=-1, keepdims=True) + b

    def hess(x):
        return np.broadcast_to(H, x.shape[:-1] + (dim, dim)).copy()

    return TestFunction("poly2", value, grad, hess, None, float(np.linalg.eigvalsh(H).max()))


def _poly4(dim: int) -> TestFunction:
    # f = sum x_j^4 / 4 + (sum x)^3 / 6 - x_1
    def value(x):
        t = x.sum(axis=-1)
        return 0.25 * np.sum(x**4, axis=-1) + t**3 / 6.0 - x[..., 0]

    def grad(x):
        t = x.sum(axis=-1, keepdims=True)
        g = x**3 + 0.5 * t * t
        g[..., 0] -= 1.0
        return g

    def hess(x):
        t = x.sum(axis=-1)
        h = np.broadcast_to(t[..., None, None], x.shape[:-1] + (dim, dim)).copy()
        idx = np.arange(dim)
        h[..., idx, idx] += 3.0 * x**2
        return h

    return TestFunction("poly4", value, grad, hess)


def _sine(dim: int) -> TestFunction:
    # f = sin(a^T x + 0.3), a_j = 1/j
    a = 1.0 / np.arange(1, dim + 1)
    aa = np.outer(a, a)
    na = float(np.linalg.norm(a))

    def value(x):
        return np.sin(x @ a + 0.3)

    def grad(x):
        return np.cos(x @ a + 0.3)[..., None] * a

    def hess(x):
        return -np.sin(x @ a + 0.3)[..., None, None] * aa

    return TestFunction("sine", value, grad, hess, na, na * na)


# max over u of |d^2/du^2 tanh u| = |2 tanh u sech^2 u|, attained at tanh u = 1/sqrt(3)
_TANH_D2_MAX = 4.0 / (3.0 * math.sqrt(3.0))


def _tanh_sum(dim: int) -> TestFunction:
    def value(x):
        return np.sum(np.tanh(x), axis=-1)

    def grad(x):
        return 1.0 - np.tanh(x) ** 2

    def hess(x):
        t = np.tanh(x)
        d = -2.0 * t * (1.0 - t * t)
        h = np.zeros(x.shape + (dim,))
        idx = np.arange(dim)
        h[..., idx, idx] = d
        return h

    return TestFunction("tanh_sum", value, grad, hess, math.sqrt(dim), _TANH_D2_MAX)


def logistic_data(dim: int, n: int = 32, seed: int = 20240601):
    """Fixed synthetic classification data for the logistic-loss battery entry."""
    rng = np.random.default_rng([seed, dim, n])
    X = rng.standard_normal((n, dim))
    w = rng.standard_normal(dim)
    y = (rng.random(n) < expit(X @ w)).astype(float)
    return X, y


def _logistic_loss(dim: int) -> TestFunction:
    # Mean binary cross-entropy of a linear model, as a function of the weights.
    X, y = logistic_data(dim)
    n = X.shape[0]
    outer = np.einsum("ni,nj->nij", X, X)

    def value(w):
        z = w @ X.T
        return np.mean(np.logaddexp(0.0, z) - y * z, axis=-1)

    def grad(w):
        r = expit(w @ X.T) - y
        return r @ X / n

    def hess(w):
        sg = expit(w @ X.T)
        c = sg * (1.0 - sg) / n
        return np.tensordot(c, outer, axes=(-1, 0))

    c1 = float(np.mean(np.linalg.norm(X, axis=1)))
    c2 = 0.25 * float(np.linalg.eigvalsh(X.T @ X / n).max())
    return TestFunction("logistic_loss", value, grad, hess, c1, c2)


BATTERY = {
    "poly2": _poly2,
    "poly4": _poly4,
    "sine": _sine,
    "tanh_sum": _tanh_sum,
    "logistic_loss": _logistic_loss,
}


def make(name: str, dim: int) -> TestFunction:
    """Instantiate the battery function ``name`` in dimension ``dim``."""
    try:
        factory = BATTERY[name]
    except KeyError:
        raise KeyError(f"unknown battery function {name!r}; choose from {sorted(BATTERY)}") from None
    return factory(int(dim))
