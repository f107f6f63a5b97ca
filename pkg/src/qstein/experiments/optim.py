"""Perturbed-gradient step rules: SGD, SAM, VSGD and q-VSGD.

All rules share one heavy-ball update

    v <- momentum * v + (g + weight_decay * w),    w <- w - lr * v,

and differ only in where the gradient g is evaluated:

* ``sgd``:   g = grad(w)
* ``sam``:   g = grad(w + delta), delta = rho * grad(w) / ||grad(w)||
* ``vsgd``:  g = mean_k grad(w + delta_k), delta_k ~ N(0, I)
  (``rho * N(0, I)`` when ``vsgd_rho_scaled`` is set)
* ``qvsgd``: g = mean_k grad(w + delta_k), delta_k = rho * eps_k / R(q, D),
  eps_k ~ N_q(0, I). With ``q = 1`` the radius is undefined and the rule
  draws exactly as ``vsgd`` does, so the two coincide under equal seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Literal

import numpy as np

from ..core import radius_sq
from ..sampler import derive_seed, sample_isotropic

__all__ = ["OptimizerConfig", "OptimizerState", "optimizer_step", "perturbations"]

Rule = Literal["sgd", "sam", "vsgd", "qvsgd"]
RULES = ("sgd", "sam", "vsgd", "qvsgd")


@dataclass(frozen=True)
class OptimizerConfig:
    rule: Rule = "sgd"
    rho: float = 0.05
    q: float = 1.0
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    mc_samples: int = 1
    seed: int = 0
    vsgd_rho_scaled: bool = False

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; choose from {RULES}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.rule == "qvsgd" and not self.q <= 1.0:
            raise ValueError(f"q-VSGD needs q <= 1, got {self.q}")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    def label(self) -> str:
        if self.rule == "qvsgd":
            return f"qvsgd(q={self.q:g})"
        return self.rule

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizerState:
    velocity: np.ndarray
    step: int = 0
    grad_evals: int = 0
    delta_norms: list = field(default_factory=list)

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(np.zeros(dim))


def perturbations(cfg: OptimizerConfig, dim: int, step: int) -> np.ndarray:
    """The (mc_samples, dim) random perturbations used by vsgd/qvsgd at ``step``."""
    seed = derive_seed(cfg.seed, step)
    gaussian = cfg.rule == "vsgd" or (cfg.rule == "qvsgd" and cfg.q == 1.0)
    if gaussian:
        eps = sample_isotropic(dim, 1.0, cfg.mc_samples, seed, workers=1)
        return cfg.rho * eps if cfg.vsgd_rho_scaled else eps
    if cfg.rule == "qvsgd":
        eps = sample_isotropic(dim, cfg.q, cfg.mc_samples, seed, workers=1)
        return (cfg.rho / math.sqrt(radius_sq(cfg.q, dim))) * eps
    raise ValueError(f"rule {cfg.rule!r} has no random perturbation")


def optimizer_step(
    params: np.ndarray,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    cfg: OptimizerConfig,
    state: OptimizerState,
) -> np.ndarray:
    """One update of ``params`` under ``cfg.rule``; ``grad_fn`` is the minibatch gradient."""
    w = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("parameters are not finite")
    rule = cfg.rule
    if rule == "sgd":
        g = grad_fn(w)
        state.grad_evals += 1
    elif rule == "sam":
        g0 = grad_fn(w)
        norm = float(np.linalg.norm(g0))
        # A vanishing gradient leaves no ascent direction: no perturbation this step.
        delta = cfg.rho * g0 / norm if norm > 0.0 else np.zeros_like(w)
        state.delta_norms.append(float(np.linalg.norm(delta)))
        g = grad_fn(w + delta)
        state.grad_evals += 2
    else:
        deltas = perturbations(cfg, w.size, state.step)
        state.delta_norms.extend(np.linalg.norm(deltas, axis=1).tolist())
        g = np.zeros_like(w)
        for d in deltas:
            g += grad_fn(w + d)
        g /= len(deltas)
        state.grad_evals += len(deltas)
    state.velocity = cfg.momentum * state.velocity + (g + cfg.weight_decay * w)
    state.step += 1
    return w - cfg.lr * state.velocity
