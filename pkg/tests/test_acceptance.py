"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -rA``; the verdict lines
are also collected in the terminal summary.
"""
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from qstein import battery
from qstein.core import QGaussian, escort, mahalanobis_sq, moments, radius_sq
from qstein.estimators import gaussian_baseline_grads, grad_mu, grad_sigma, prop1_estimators
from qstein.experiments.logreg import LogRegConfig, radius_turning_point, run_logreg_variance
from qstein.experiments.optim import OptimizerConfig, OptimizerState, optimizer_step, perturbations
from qstein.experiments.training import MLP, default_toy_configs, make_dataset, run_toy_training
from qstein.oracle import bonnet_sides, expect_quadrature, price_sides
from qstein.sampler import derive_seed, sample
from qstein.verify import default_law, run_battery

GRID_Q = (0.0, 0.3, 0.5, 0.8, 0.99)
GRID = [(q, d) for q in GRID_Q for d in (1, 2)]
ONE = lambda x: np.ones(x.shape[0])  # noqa: E731


class Clock:
    def __init__(self, budget_s):
        self.budget = budget_s
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed < self.budget

    def __str__(self):
        return f"{self.elapsed:.1f}s of {self.budget:.0f}s"


def test_c1_normalization(verdict):
    clock = Clock(10)
    errs = {(q, d): abs(float(expect_quadrature(default_law(q, d), ONE)) - 1.0) for q, d in GRID}
    worst = max(errs.values())
    verdict(1, worst < 1e-8 and clock.ok, f"normalization max |int p - 1| = {worst:.1e} (< 1e-8), {clock}")


class TestC2Radius:
    def test_hand_value_and_finite(self, verdict):
        clock = Clock(1)
        err = abs(radius_sq(0.0, 1) - 1.5 ** (2.0 / 3.0))
        dims = np.unique(np.logspace(0, 6, 400).astype(int))
        finite = all(math.isfinite(radius_sq(q, int(d))) and radius_sq(q, int(d)) > 0 for q in GRID_Q for d in dims)
        verdict(2, err < 1e-12 and finite and clock.ok,
                f"R^2(0,1) error {err:.1e} (< 1e-12); finite up to D=1e6 for all q: {finite}; {clock}")

    def test_shape_in_dimension(self, verdict):
        # The radius falls to a minimum near D ~ 3.7 m and increases from there on to D = 1e6.
        ok = True
        for q in GRID_Q:
            D_star = radius_turning_point(q)
            m = 1.0 / (1.0 - q)
            r_small = np.array([radius_sq(q, d) for d in range(1, D_star + 1)])
            r_large = np.array([radius_sq(q, int(d)) for d in np.unique(np.geomspace(D_star, 1e6, 300).astype(int))])
            ok &= bool(np.all(np.diff(r_small) < 0) and np.all(np.diff(r_large) > 0))
            ok &= abs(D_star / m - 3.7) < 1.0 or D_star <= 5
        verdict(2, ok, "R^2 decreases then increases in D with one turning point near 3.7 m")

    @pytest.mark.xfail(strict=True, reason="R^2 decreases in D below D ~ 3.7 m; see decisions ledger")
    def test_monotone_in_dimension(self, verdict):
        bad = [(q, d) for q in GRID_Q for d in range(1, 400) if radius_sq(q, d + 1) <= radius_sq(q, d)]
        verdict(2, not bad, f"R^2 monotone increasing in D: {len(bad)} decreasing steps, first at (q, D) = {bad[:1]}")


def _cov_zscores(x, target):
    xc = x - x.mean(axis=0)
    prod = np.einsum("ni,nj->nij", xc, xc)
    se = prod.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    return np.abs(prod.mean(axis=0) - target) / se


def test_c3_closed_form_moments(verdict):
    clock = Clock(60)
    quad_err, worst_z = 0.0, 0.0
    for k, (q, d) in enumerate(GRID):
        p = default_law(q, d)
        mom, R2, m = moments(p), p.radius_sq, p.m
        es = expect_quadrature(p, lambda x: mahalanobis_sq(p, x))
        es_star = expect_quadrature(escort(p, 1), lambda x: mahalanobis_sq(p, x))
        quad_err = max(quad_err, abs(es - d * R2 / (d + 2 * (m + 1))), abs(es_star - d * R2 / (d + 2 * (m + 2))))
        assert mom.E_s_p == pytest.approx(d * R2 / (d + 2 * (m + 1)), rel=1e-13)
        x = sample(p, 1_000_000, derive_seed(3, k)).points
        worst_z = max(worst_z, float(_cov_zscores(x, mom.E_s_p / d * p.sigma).max()))
    verdict(3, quad_err < 1e-8 and worst_z < 3 and clock.ok,
            f"E_p[s], E_p*[s] quadrature error {quad_err:.1e} (< 1e-8); covariance max {worst_z:.2f} SE (< 3); {clock}")


def test_c4_radial_law(verdict):
    clock = Clock(30)
    pvals = {}
    for k, (q, d) in enumerate(GRID):
        p = default_law(q, d)
        b = sample(p, 100_000, derive_seed(4, k))
        pvals[(q, d)] = stats.kstest(b.s_values / p.radius_sq, stats.beta(d / 2, p.m + 1).cdf).pvalue
    worst = min(pvals, key=pvals.get)
    verdict(4, pvals[worst] > 0.01 and clock.ok,
            f"KS s/R^2 ~ Beta(D/2, m+1): min p-value {pvals[worst]:.3f} at (q, D) = {worst} (> 0.01); {clock}")


@pytest.mark.slow
def test_c5_stein(verdict):
    clock = Clock(300)
    failed, worst_quad, worst_z = [], 0.0, 0.0
    for k, (q, d) in enumerate(GRID):
        checks = run_battery(q, d, S=1_000_000, seed=derive_seed(5, k))
        for c in checks:
            if c.name.startswith("stein[") and c.unit == "abs":
                worst_quad = max(worst_quad, c.discrepancy)
            if c.name.startswith("mc stein"):
                worst_z = max(worst_z, c.discrepancy)
        failed += [f"{c.name} (q={q}, D={d})" for c in checks if not c.passed]
    verdict(5, not failed and worst_quad < 1e-7 and worst_z < 4 and clock.ok,
            f"Stein quadrature max gap {worst_quad:.1e} (< 1e-7); MC sides max {worst_z:.2f} SE (< 4); "
            f"failed {failed[:3]}; {clock}")


@pytest.mark.slow
class TestC6BonnetPrice:
    REPS = 100

    @staticmethod
    def _rep_size(p, est, source, fs, targets):
        # Per-rep S so that four standard errors of the 100-rep mean stay below 1e-2 of the target norm.
        pilot = sample(p, 200_000, derive_seed(6, 99, source == "escort"), source)
        need = 1000
        for f, target in zip(fs, targets):
            sd = math.sqrt(est(p, f, 0, 0, batch=pilot).per_entry_variance.sum())
            need = max(need, math.ceil((4 * sd / (1e-2 * np.linalg.norm(target))) ** 2 / TestC6BonnetPrice.REPS))
        return min(need, 2_000_000)

    def test_fd_vs_formula_and_estimators(self, verdict):
        clock = Clock(600)
        worst_formula, worst_rel = 0.0, 0.0
        names = sorted(battery.BATTERY)
        for k, (q, d) in enumerate(GRID):
            p = default_law(q, d)
            fs = [battery.make(n, d) for n in names]
            bon = [bonnet_sides(p, f) for f in fs]
            pri = [price_sides(p, f) for f in fs]
            for b, pr in zip(bon, pri):
                worst_formula = max(worst_formula, float(np.max(np.abs(b["fd"] - b["formula"]))),
                                    float(np.max(np.abs(pr["fd"] - pr["formula"]))))
            S_b = self._rep_size(p, grad_mu, "base", fs, [b["fd"] for b in bon])
            S_e = self._rep_size(p, grad_sigma, "escort", fs, [pr["fd"] for pr in pri])
            mean_mu = [np.zeros(d) for _ in fs]
            mean_sig = [np.zeros((d, d)) for _ in fs]
            for r in range(self.REPS):
                base = sample(p, S_b, derive_seed(6, k, r, 0), "base")
                star = sample(p, S_e, derive_seed(6, k, r, 1), "escort")
                for i, f in enumerate(fs):
                    mean_mu[i] += grad_mu(p, f, S_b, 0, batch=base).value / self.REPS
                    mean_sig[i] += grad_sigma(p, f, S_e, 0, batch=star).value / self.REPS
            for i in range(len(fs)):
                for est, fd in ((mean_mu[i], bon[i]["fd"]), (mean_sig[i], pri[i]["fd"])):
                    worst_rel = max(worst_rel, float(np.linalg.norm(est - fd) / np.linalg.norm(fd)))
        verdict(6, worst_formula < 1e-6 and worst_rel < 1e-2 and clock.ok,
                f"FD vs quadrature forms max gap {worst_formula:.1e} (< 1e-6); "
                f"100-rep estimator means max relative gap {worst_rel:.2e} (< 1e-2); {clock}")

    def test_near_gaussian_baselines(self, verdict):
        clock = Clock(600)
        S, worst, poly2_gap = 200_000, 0.0, 0.0
        for d in (1, 2):
            p = default_law(0.9999, d)
            for n in sorted(battery.BATTERY):
                f = battery.make(n, d)
                pairs = [(grad_mu(p, f, S, derive_seed(61, d, 0)),
                          gaussian_baseline_grads(p.mu, p.sigma_factor, f, S, derive_seed(61, d, 1), "mu"))]
                hq = grad_sigma(p, f, S, derive_seed(61, d, 2))
                hg = gaussian_baseline_grads(p.mu, p.sigma_factor, f, S, derive_seed(61, d, 3), "sigma")
                if n == "poly2":
                    # Constant Hessian: both arms are exact constants with zero spread, and they differ by
                    # the covariance scale, 1 - O(1 - q). Compare that gap against its closed form instead.
                    gap = hq.value - hg.value
                    expected = (moments(p).cov_scale - 1.0) * hg.value
                    poly2_gap = max(poly2_gap, float(np.max(np.abs(gap - expected))))
                else:
                    pairs.append((hq, hg))
                for a, b in pairs:
                    se = np.sqrt(a.stderr**2 + b.stderr**2)
                    diff = np.abs(a.value - b.value)
                    # Entries with no spread in either arm (a diagonal Hessian's zeros) must agree exactly.
                    assert np.all(diff[se == 0] == 0)
                    worst = max(worst, float(np.max(diff[se > 0] / se[se > 0])))
        verdict(6, worst < 4 and poly2_gap < 1e-10 and clock.ok,
                f"q=0.9999 vs Gaussian Bonnet/Price max {worst:.2f} joint SE (< 4); "
                f"poly2 Price gap matches covariance-scale offset to {poly2_gap:.1e}; {clock}")


@pytest.mark.slow
def test_c7_reweighted_bounds(verdict):
    clock = Clock(600)
    reps, sizes = 1000, (8, 64, 512)
    lines, ok = [], True
    for q, d in ((0.0, 1), (0.5, 2), (0.8, 5), (0.99, 10)):
        p = QGaussian.standard(d, q)
        for name in sorted(battery.BATTERY):
            f = battery.make(name, d)
            for which, bound_c in (("grad", f.grad_bound), ("hess", f.hess_bound)):
                if bound_c is None:
                    continue
                spread = {}
                for S in sizes:
                    vals = np.array([prop1_estimators(p, f, S, derive_seed(7, d, S, r), which).value
                                     for r in range(reps)])
                    per_entry = (p.radius_sq * bound_c / moments(p).M) ** 2 / S
                    if which == "grad":
                        v = vals.var(axis=0, ddof=1)
                        ok &= bool(np.all(v <= per_entry))
                        spread[S] = float(v.max())
                    else:
                        frob = float(np.mean(np.sum((vals - vals.mean(axis=0)) ** 2, axis=(1, 2))))
                        ok &= frob <= d * d * per_entry
                        spread[S] = frob
                ratios = [spread[S] * S / (spread[8] * 8) for S in sizes[1:]]
                ok &= all(1 / 1.5 <= r <= 1.5 for r in ratios)
                lines.append(f"{name}/{which} q={q} D={d}: 1/S ratios {np.round(ratios, 3).tolist()}")
    verdict(7, ok and clock.ok,
            f"variance and Frobenius bounds hold, 1/S scaling within x1.5 over {len(lines)} arms; {clock}")


def test_c8_logreg_ordering(verdict):
    clock = Clock(300)
    rep = run_logreg_variance(LogRegConfig(dims=(10, 50, 200), qs=(0.0, 0.5, 0.8, 1.0), S=8, reps=50))
    ok, parts = True, []
    for D in (10, 50, 200):
        rows = sorted((r for r in rep.variance if r["D"] == D), key=lambda r: r["q"])
        v = [r["mean_coord_variance"] for r in rows]
        ok &= all(a <= b for a, b in zip(v, v[1:]))
        ok &= all(r["stderr"] > 0 and math.isfinite(r["stderr"]) for r in rows)
        parts.append(f"D={D}: " + ", ".join(f"{r['mean_coord_variance']:.2e}+-{r['stderr']:.0e}" for r in rows))
    verdict(8, ok and clock.ok, "variance nonincreasing from q=1 to q=0; " + "; ".join(parts) + f"; {clock}")


class TestC9Optimizers:
    @staticmethod
    def _trajectory(cfg, steps=150):
        Xtr, ytr, _, _ = make_dataset("two_moons", 0)
        model = MLP(Xtr.shape[1], 16, 2)
        w = model.init(np.random.default_rng(0))
        st = OptimizerState.zeros(w.size)
        path = [w]
        for t in range(steps):
            idx = np.arange(t * 32, (t + 1) * 32) % Xtr.shape[0]
            w = optimizer_step(w, lambda v: model.grad(v, Xtr[idx], ytr[idx]), cfg, st)
            path.append(w)
        return np.array(path), st

    def test_equivalences(self, verdict):
        clock = Clock(300)
        a, _ = self._trajectory(OptimizerConfig(rule="vsgd", rho=0.05, seed=4))
        b, _ = self._trajectory(OptimizerConfig(rule="qvsgd", q=1.0, rho=0.05, seed=4))
        c, _ = self._trajectory(OptimizerConfig(rule="sgd", rho=0.0))
        e, _ = self._trajectory(OptimizerConfig(rule="sam", rho=0.0))
        max_norm = 0.0
        for q in (0.0, 0.5, 0.9, 0.999):
            cfg = OptimizerConfig(rule="qvsgd", q=q, rho=0.05, mc_samples=8, seed=1)
            _, st = self._trajectory(cfg, steps=100)
            max_norm = max(max_norm, max(st.delta_norms))
            max_norm = max(max_norm, max(float(np.linalg.norm(perturbations(cfg, 82, s), axis=1).max())
                                         for s in range(200)))
        same_v, same_s = a.tobytes() == b.tobytes(), c.tobytes() == e.tobytes()
        verdict(9, same_v and same_s and max_norm <= 0.05 and clock.ok,
                f"q-VSGD(q=1) == VSGD: {same_v}; SAM(rho=0) == SGD bitwise: {same_s}; "
                f"max q-VSGD |delta| {max_norm:.4f} (<= rho = 0.05); {clock}")

    def test_toy_training(self, verdict):
        clock = Clock(300)
        rep = run_toy_training(default_toy_configs(), "two_moons", n_seeds=5)
        worst, nan_free = 1.0, True
        for block in rep.training:
            for run in block["runs"]:
                nan_free &= not run["diverged"] and math.isfinite(run["final_loss"])
                worst = min(worst, run["final_accuracy"])
        labels = [b["label"] for b in rep.training]
        verdict(9, nan_free and worst >= 0.95 and clock.ok,
                f"two-moons over 5 seeds for {labels}: no NaN {nan_free}, min accuracy {worst:.3f} (>= 0.95); {clock}")


def _cli(args, cwd, threads):
    env = dict(os.environ, QSTEIN_THREADS=str(threads))
    res = subprocess.run([sys.executable, "-m", "qstein", *args], cwd=cwd, env=env, capture_output=True)
    assert res.returncode == 0, res.stderr.decode()
    return res.stdout


@pytest.mark.slow
def test_c10_determinism(verdict, tmp_path):
    clock = Clock(120)
    commands = {
        "sample": ["sample", "--d", "3", "--q", "0.4", "--s", "200000", "--seed", "11", "--out", "out.csv"],
        "verify": ["verify", "--q", "0.5", "--d", "2", "--s", "200000", "--seed", "3", "--out", "out.json"],
        "experiment": ["experiment", "--name", "logreg_variance",
                       "--params", json.dumps({"dims": [10, 50], "reps": 20}), "--out", "out.json",
                       "--csv", "out.csv"],
    }
    same = {}
    for name, args in commands.items():
        blobs = []
        for run, threads in enumerate((1, 1, 4, 4)):
            work = tmp_path / f"{name}{run}"
            work.mkdir()
            stdout = _cli(args, work, threads)
            files = sorted(p.name for p in work.iterdir())
            blobs.append((stdout, [(fn, (work / fn).read_bytes()) for fn in files]))
        same[name] = all(b == blobs[0] for b in blobs[1:])
    verdict(10, all(same.values()) and clock.ok,
            f"byte-identical over two runs and QSTEIN_THREADS in {{1, 4}}: {same}; {clock}")
