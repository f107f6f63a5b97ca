"""Command-line interface: ``qstein {sample,density,verify,estimate,experiment}``.

Exit codes: 0 success, 1 runtime or identity failure, 2 usage/config error.
Options may also come from ``--config file.json``, whose keys are the option
names with dashes replaced by underscores; explicit flags win over the file
and unknown keys are rejected. Every output echoes its resolved config (JSON
outputs inline, CSV outputs in a ``<out>.config.json`` sidecar).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import battery, estimators, verify
from .core import QGaussian, UnsupportedRegimeError, log_density
from .estimators import json_safe
from .experiments import logreg, training
from .experiments.optim import OptimizerConfig
from .oracle import OracleDimensionError
from .sampler import GaussianLimitWarning, sample, write_csv

__all__ = ["main", "build_parser", "ConfigError"]


class ConfigError(ValueError):
    """Bad command-line or config-file input (exit code 2)."""


ESTIMATORS = (
    "stein_lhs",
    "stein_rhs_escort",
    "stein_rhs_p_only",
    "q_bonnet",
    "q_price",
    "prop1_grad",
    "prop1_hess",
    "bonnet",
    "price",
)
EXPERIMENTS = ("logreg_variance", "radius_curve", "toy_training")

# Defaults live here rather than in argparse so that config files can be told
# apart from explicit flags.
_DIST_DEFAULTS = {"d": 1, "q": 0.0, "mu": None, "sigma_factor": "identity"}
DEFAULTS = {
    "sample": {**_DIST_DEFAULTS, "s": 1000, "seed": 0, "source": "base", "out": None},
    "density": {**_DIST_DEFAULTS, "points": None, "out": None},
    "verify": {"d": 1, "q": 0.0, "mu": None, "sigma_factor": None, "s": 100_000, "seed": 0, "mc": True,
               "out": None},
    "estimate": {**_DIST_DEFAULTS, "estimator": "q_bonnet", "function": "sine", "s": 10_000, "seed": 0,
                 "out": None},
    "experiment": {"name": "logreg_variance", "params": {}, "out": None, "csv": None, "timings": None},
}


def _dump_json(obj) -> str:
    return json.dumps(json_safe(obj), allow_nan=False, sort_keys=True, indent=1) + "\n"


def _write_text(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_dist(p: argparse.ArgumentParser):
    p.add_argument("--d", type=int, help="dimension D (default 1)")
    p.add_argument("--q", type=float, help="shape q in [0, 1]; q = 1 is the Gaussian (default 0)")
    p.add_argument("--mu", help="location: comma-separated values or a JSON file with a list (default 0)")
    p.add_argument(
        "--sigma-factor",
        help="lower-triangular scale factor L (Sigma = L L^T): 'identity', "
        "rows 'a;b,c' or a JSON file with a list of rows (default identity)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qstein", description="Bounded-support q-Gaussian toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a batch and write it as CSV")
    _add_dist(p)
    p.add_argument("--s", type=int, help="number of draws (default 1000)")
    p.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    p.add_argument("--source", choices=("base", "escort"), help="base law or escort (default base)")
    p.add_argument("--out", help="output CSV path (required)")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("density", help="evaluate log-densities at points from a CSV")
    _add_dist(p)
    p.add_argument("--points", help="CSV with header x_1..x_D (required)")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("verify", help="run the identity battery against the quadrature oracle (D <= 2)")
    _add_dist(p)
    p.add_argument("--s", type=int, help="Monte Carlo sample size (default 100000)")
    p.add_argument("--seed", type=int, help="seed of the Monte Carlo checks (default 0)")
    p.add_argument("--no-mc", dest="mc", action="store_const", const=False, help="quadrature checks only")
    p.add_argument("--out", help="also write the results as JSON")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("estimate", help="run one estimator on a battery function")
    _add_dist(p)
    p.add_argument("--estimator", choices=ESTIMATORS, help="estimator (default q_bonnet)")
    p.add_argument("--function", help=f"battery function, one of {sorted(battery.BATTERY)} (default sine)")
    p.add_argument("--s", type=int, help="number of draws (default 10000)")
    p.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("experiment", help="run an experiment and write its report")
    p.add_argument("--name", choices=EXPERIMENTS, help="experiment (default logreg_variance)")
    p.add_argument("--params", type=json.loads, help="experiment parameters as inline JSON")
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="also write the flat CSV report here")
    p.add_argument("--timings", help="write wall-clock timings here (kept out of the report)")
    p.add_argument("--config", help="JSON config file")
    return parser


def resolve_config(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the --config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    if getattr(ns, "config", None):
        try:
            loaded = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {ns.config}: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {command!r}: {unknown}; allowed: {sorted(cfg)}")
        cfg.update(loaded)
    for key in cfg:
        v = getattr(ns, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _parse_vector(text, dim: int) -> np.ndarray:
    if text is None:
        return np.zeros(dim)
    if isinstance(text, (list, tuple)):
        vals = list(text)
    elif Path(str(text)).is_file():
        vals = json.loads(Path(text).read_text(encoding="utf-8"))
    else:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    mu = np.asarray(vals, dtype=float).ravel()
    if mu.shape != (dim,):
        raise ConfigError(f"mu must have {dim} entries, got {mu.size}")
    return mu


def _parse_factor(text, dim: int) -> np.ndarray:
    if text is None or text == "identity":
        return np.eye(dim)
    if isinstance(text, list):
        rows = text
    elif Path(str(text)).is_file():
        rows = json.loads(Path(text).read_text(encoding="utf-8"))
    else:
        rows = [[float(v) for v in r.split(",")] for r in str(text).split(";")]
    L = np.zeros((dim, dim))
    if len(rows) != dim:
        raise ConfigError(f"sigma factor must have {dim} rows, got {len(rows)}")
    for i, r in enumerate(rows):
        if len(r) not in (i + 1, dim):
            raise ConfigError(f"sigma factor row {i} must have {i + 1} or {dim} entries")
        L[i, : len(r)] = r
    return L


def _law(cfg: dict) -> QGaussian:
    d = int(cfg["d"])
    if d < 1:
        raise ConfigError(f"dimension must be >= 1, got {d}")
    return QGaussian(_parse_vector(cfg["mu"], d), _parse_factor(cfg["sigma_factor"], d), float(cfg["q"]))


def _sidecar(path, cfg: dict):
    Path(str(path) + ".config.json").write_text(_dump_json(cfg), encoding="utf-8")


def cmd_sample(cfg: dict) -> int:
    if not cfg["out"]:
        raise ConfigError("sample needs --out")
    p = _law(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GaussianLimitWarning)
        batch = sample(p, int(cfg["s"]), int(cfg["seed"]), cfg["source"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_csv(batch, cfg["out"])
    _sidecar(cfg["out"], {**cfg, "law": p.to_dict()})
    return 0


def cmd_density(cfg: dict) -> int:
    if not cfg["points"]:
        raise ConfigError("density needs --points")
    p = _law(cfg)
    with open(cfg["points"], newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = [h.strip() for h in rows[0]]
    cols = [header.index(f"x_{j + 1}") if f"x_{j + 1}" in header else -1 for j in range(p.dim)]
    if min(cols) < 0:
        raise ConfigError(f"points CSV needs columns x_1..x_{p.dim}")
    x = np.array([[float(r[c]) for c in cols] for r in rows[1:] if r], dtype=float).reshape(-1, p.dim)
    ld = log_density(p, x) if x.shape[0] else np.empty(0)
    ld = np.atleast_1d(np.asarray(ld, dtype=float))
    lines = []
    buf_rows = [[f"x_{j + 1}" for j in range(p.dim)] + ["log_density"]]
    buf_rows += [[repr(v) for v in xi] + [repr(float(li))] for xi, li in zip(x.tolist(), ld)]
    for r in buf_rows:
        lines.append(",".join(r))
    _write_text(cfg["out"], "\r\n".join(lines) + "\r\n")
    if cfg["out"] and cfg["out"] != "-":
        _sidecar(cfg["out"], {**cfg, "law": p.to_dict()})
    return 0


def cmd_verify(cfg: dict) -> int:
    d, q = int(cfg["d"]), float(cfg["q"])
    if d > 2:
        raise ConfigError(
            f"verify needs D <= 2: the quadrature oracle integrates in one or two dimensions only (got D={d})"
        )
    if cfg["mu"] is None and cfg["sigma_factor"] is None:
        p = verify.default_law(q, d)
    else:
        p = _law({**cfg, "sigma_factor": cfg["sigma_factor"] or "identity"})
    checks = verify.run_battery(q, d, int(cfg["s"]), int(cfg["seed"]), p=p, mc=bool(cfg["mc"]))
    print(verify.format_table(checks))
    failed = [c.name for c in checks if not c.passed]
    if cfg["out"]:
        Path(cfg["out"]).write_text(
            _dump_json({"config": {**cfg, "law": p.to_dict()}, "checks": [c.to_dict() for c in checks],
                        "all_passed": not failed}),
            encoding="utf-8",
        )
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(checks)} checks passed")
    return 0


def cmd_estimate(cfg: dict) -> int:
    p = _law(cfg)
    name = cfg["estimator"]
    if name not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {name!r}; choose from {list(ESTIMATORS)}")
    try:
        f = battery.make(cfg["function"], p.dim)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from None
    S, seed = int(cfg["s"]), int(cfg["seed"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GaussianLimitWarning)
        if name == "stein_lhs":
            est = estimators.stein_lhs(p, f, sample(p, S, seed, "base"))
        elif name == "stein_rhs_escort":
            est = estimators.stein_rhs(p, f, sample(p, S, seed, "escort"), "escort_batch")
        elif name == "stein_rhs_p_only":
            est = estimators.stein_rhs(p, f, sample(p, S, seed, "base"), "p_only_reweighted")
        elif name == "q_bonnet":
            est = estimators.grad_mu(p, f, S, seed)
        elif name == "q_price":
            est = estimators.grad_sigma(p, f, S, seed)
        elif name in ("prop1_grad", "prop1_hess"):
            if p.is_gaussian:
                raise ConfigError("the reweighted estimators need q < 1")
            est = estimators.prop1_estimators(p, f, S, seed, name.split("_")[1])
        else:
            which = "mu" if name == "bonnet" else "sigma"
            est = estimators.gaussian_baseline_grads(p.mu, p.sigma_factor, f, S, seed, which)
    _write_text(cfg["out"], _dump_json({"config": {**cfg, "law": p.to_dict()}, "estimate": est.to_dict()}))
    return 0


_TOY_KEYS = {"dataset", "n_seeds", "seed", "epochs", "rho", "configs"}


def _run_experiment(name: str, params: dict):
    if not isinstance(params, dict):
        raise ConfigError("params must be a JSON object")
    if name == "logreg_variance":
        try:
            lcfg = logreg.LogRegConfig(**params)
        except TypeError as e:
            raise ConfigError(f"bad logreg_variance params: {e}") from None
        return logreg.run_logreg_variance(lcfg)
    if name == "radius_curve":
        unknown = set(params) - {"qs", "d_max", "dims"}
        if unknown:
            raise ConfigError(f"unknown radius_curve params: {sorted(unknown)}")
        qs = params.get("qs", [0.0, 0.5, 0.8])
        d_max = int(params.get("d_max", 200))
        rows = logreg.run_radius_curve(qs, d_max, params.get("dims"))
        from .experiments.report import ExperimentReport

        return ExperimentReport("radius_curve", {"qs": qs, "d_max": d_max, "dims": params.get("dims")}, radius=rows)
    if name == "toy_training":
        unknown = set(params) - _TOY_KEYS
        if unknown:
            raise ConfigError(f"unknown toy_training params: {sorted(unknown)}")
        if "configs" in params:
            try:
                cfgs = [OptimizerConfig(**c) for c in params["configs"]]
            except TypeError as e:
                raise ConfigError(f"bad optimizer config: {e}") from None
        else:
            cfgs = training.default_toy_configs(
                int(params.get("seed", 0)), int(params.get("epochs", 40)), float(params.get("rho", 0.05))
            )
        return training.run_toy_training(cfgs, params.get("dataset", "two_moons"), int(params.get("n_seeds", 5)))
    raise ConfigError(f"unknown experiment {name!r}; choose from {list(EXPERIMENTS)}")


def cmd_experiment(cfg: dict) -> int:
    report = _run_experiment(cfg["name"], cfg["params"] or {})
    report.config = {"cli": cfg, "experiment": report.config}
    _write_text(cfg["out"], report.to_json(include_timings=False) + "\n")
    if cfg["csv"]:
        report.write_csv(cfg["csv"])
        _sidecar(cfg["csv"], cfg)
    if cfg["timings"]:
        Path(cfg["timings"]).write_text(_dump_json(report.timings), encoding="utf-8")
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "density": cmd_density,
    "verify": cmd_verify,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed usage
        return int(e.code or 0) and 2
    try:
        cfg = resolve_config(ns.command, ns)
        run = COMMANDS[ns.command]
        return run(cfg)
    except (ConfigError, UnsupportedRegimeError, OracleDimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as e:
        # Parameter validation in the library raises ValueError before any work starts.
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
