"""Toy-scale optimizer comparison: a one-hidden-layer tanh network trained with
SGD, SAM, VSGD or q-VSGD on small generated datasets."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.special import log_softmax, softmax
from sklearn.datasets import make_classification, make_moons

from .. import _parallel
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .report import ExperimentReport

__all__ = ["MLP", "make_dataset", "train_one", "run_toy_training", "default_toy_configs", "DATASETS"]

DATASETS = ("two_moons", "small_mlp_classification")
Dataset = Literal["two_moons", "small_mlp_classification"]


def make_dataset(name: str, seed: int):
    """(X_train, y_train, X_test, y_test) generated from ``seed``."""
    rs = int(seed) % (2**32)
    if name == "two_moons":
        X, y = make_moons(n_samples=1024, noise=0.1, random_state=rs)
    elif name == "small_mlp_classification":
        X, y = make_classification(
            n_samples=1200, n_features=10, n_informative=6, n_redundant=2, n_classes=3,
            n_clusters_per_class=1, class_sep=1.5, random_state=rs,
        )
    else:
        raise ValueError(f"unknown dataset {name!r}; choose from {DATASETS}")
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    n_train = X.shape[0] // 2
    return X[:n_train], y[:n_train], X[n_train:], y[n_train:]


@dataclass(frozen=True)
class MLP:
    """x -> softmax(W2 tanh(W1 x + b1) + b2), parameters packed in one flat vector."""

    n_in: int
    n_hidden: int
    n_out: int

    @property
    def n_params(self) -> int:
        return self.n_hidden * (self.n_in + 1) + self.n_out * (self.n_hidden + 1)

    def unpack(self, w):
        i, h, o = self.n_in, self.n_hidden, self.n_out
        a = h * i
        W1 = w[:a].reshape(h, i)
        b1 = w[a : a + h]
        W2 = w[a + h : a + h + o * h].reshape(o, h)
        b2 = w[a + h + o * h :]
        return W1, b1, W2, b2

    def init(self, rng: np.random.Generator) -> np.ndarray:
        W1 = rng.standard_normal((self.n_hidden, self.n_in)) / math.sqrt(self.n_in)
        W2 = rng.standard_normal((self.n_out, self.n_hidden)) / math.sqrt(self.n_hidden)
        return np.concatenate([W1.ravel(), np.zeros(self.n_hidden), W2.ravel(), np.zeros(self.n_out)])

    def logits(self, w, X):
        W1, b1, W2, b2 = self.unpack(w)
        return np.tanh(X @ W1.T + b1) @ W2.T + b2

    def loss(self, w, X, y) -> float:
        lp = log_softmax(self.logits(w, X), axis=1)
        return float(-lp[np.arange(len(y)), y].mean())

    def accuracy(self, w, X, y) -> float:
        return float(np.mean(np.argmax(self.logits(w, X), axis=1) == y))

    def grad(self, w, X, y) -> np.ndarray:
        W1, b1, W2, b2 = self.unpack(w)
        Hd = np.tanh(X @ W1.T + b1)
        P = softmax(Hd @ W2.T + b2, axis=1)
        P[np.arange(len(y)), y] -= 1.0
        P /= len(y)
        gW2 = P.T @ Hd
        gb2 = P.sum(axis=0)
        dH = (P @ W2) * (1.0 - Hd * Hd)
        gW1 = dH.T @ X
        gb1 = dH.sum(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def _hidden_for(dataset: str) -> int:
    return 16 if dataset == "two_moons" else 32


def train_one(cfg: OptimizerConfig, dataset: Dataset = "two_moons", trace: bool = False) -> dict:
    """Train from ``cfg.seed``; data, initialization and minibatch order depend on the seed only."""
    Xtr, ytr, Xte, yte = make_dataset(dataset, cfg.seed)
    model = MLP(Xtr.shape[1], _hidden_for(dataset), int(ytr.max()) + 1)
    w = model.init(np.random.default_rng([int(cfg.seed), 1]))
    state = OptimizerState.zeros(model.n_params)
    n = Xtr.shape[0]
    diverged = False
    losses = []
    step_time = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([int(cfg.seed), 2, epoch]).permutation(n)
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                Xb, yb = Xtr[idx], ytr[idx]
                t0 = time.perf_counter()
                try:
                    w = optimizer_step(w, lambda v: model.grad(v, Xb, yb), cfg, state)
                except FloatingPointError:
                    diverged = True
                step_time += time.perf_counter() - t0
                if diverged or not np.all(np.isfinite(w)):
                    diverged = True
                    break
            if diverged:
                break
            if trace:
                losses.append(model.loss(w, Xtr, ytr))
    if diverged:
        final_loss, acc = math.nan, math.nan
    else:
        final_loss, acc = model.loss(w, Xte, yte), model.accuracy(w, Xte, yte)
    out = {
        "seed": cfg.seed,
        "final_accuracy": acc,
        "final_loss": final_loss,
        "diverged": diverged,
        "grad_evals": state.grad_evals,
        "steps": state.step,
        "max_delta_norm": max(state.delta_norms) if state.delta_norms else 0.0,
        "n_params": model.n_params,
        "_step_time_s": step_time,
    }
    if trace:
        out["train_loss_trace"] = losses
    return out


def _mean_se(vals):
    v = np.asarray([x for x in vals if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def run_toy_training(
    cfgs: list,
    dataset: Dataset = "two_moons",
    n_seeds: int = 5,
    workers: int | None = None,
    trace: bool = False,
) -> ExperimentReport:
    """Train under each config for seeds cfg.seed, cfg.seed + 1, ...; one training block per config.

    Run ``i`` of every config uses the same seed, so all rules see the same
    data, initialization and minibatch order. A diverged run is flagged,
    not raised.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if dataset not in DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; choose from {DATASETS}")
    t_start = time.perf_counter()
    jobs = [(c, replace(cfg, seed=cfg.seed + i)) for c, cfg in enumerate(cfgs) for i in range(n_seeds)]
    results = _parallel.ordered_map(lambda k: train_one(jobs[k][1], dataset, trace), len(jobs), workers)
    blocks, timings = [], {}
    for c, cfg in enumerate(cfgs):
        runs = [r for (cc, _), r in zip(jobs, results) if cc == c]
        step_times = [r.pop("_step_time_s") for r in runs]
        acc = _mean_se([r["final_accuracy"] for r in runs])
        loss = _mean_se([r["final_loss"] for r in runs])
        label = cfg.label()
        blocks.append(
            {
                "rule": cfg.rule,
                "label": label,
                "q": cfg.q if cfg.rule == "qvsgd" else None,
                "config": cfg.to_dict(),
                "runs": runs,
                "summary": {
                    "accuracy_mean": acc[0],
                    "accuracy_se": acc[1],
                    "loss_mean": loss[0],
                    "loss_se": loss[1],
                    "n_diverged": sum(r["diverged"] for r in runs),
                },
            }
        )
        n_steps = sum(r["steps"] for r in runs)
        timings[f"{c}:{label}"] = {
            "total_step_s": float(sum(step_times)),
            "mean_step_s": float(sum(step_times) / max(n_steps, 1)),
        }
    timings["total_s"] = time.perf_counter() - t_start
    return ExperimentReport(
        experiment=f"toy_training:{dataset}",
        config={"dataset": dataset, "n_seeds": n_seeds, "configs": [c.to_dict() for c in cfgs]},
        training=blocks,
        timings=timings,
    )


def default_toy_configs(seed: int = 0, epochs: int = 40, rho: float = 0.05) -> list:
    """SGD, SAM, VSGD and q-VSGD at q in {0, 0.5, 1}, sharing every hyperparameter.

    VSGD uses unscaled N(0, I) weight noise; pass ``vsgd_rho_scaled=True``
    through :func:`dataclasses.replace` for the rho-scaled variant.
    """
    base = dict(lr=0.1, momentum=0.9, weight_decay=1e-4, epochs=epochs, batch_size=32,
                mc_samples=1, seed=seed, rho=rho)
    return [
        OptimizerConfig(rule="sgd", **base),
        OptimizerConfig(rule="sam", **base),
        OptimizerConfig(rule="vsgd", **base),
        OptimizerConfig(rule="qvsgd", q=0.0, **base),
        OptimizerConfig(rule="qvsgd", q=0.5, **base),
        OptimizerConfig(rule="qvsgd", q=1.0, **base),
    ]
