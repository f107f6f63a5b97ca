"""Serializable experiment reports (JSON and flat CSV)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..estimators import json_safe

__all__ = ["ExperimentReport", "CSV_SCHEMA_VERSION", "CSV_COLUMNS"]

CSV_SCHEMA_VERSION = 1
# One row per (experiment, D, q, rule, rep/seed, metric); empty cells where a key does not apply.
CSV_COLUMNS = ["schema_version", "experiment", "D", "q", "rule", "rep_or_seed", "metric", "value"]


@dataclass
class ExperimentReport:
    """Record of one experiment run.

    ``variance`` rows: {D, q, mean_coord_variance, stderr}.
    ``radius`` rows: {q, D, radius, radius_sq}.
    ``training`` rows: per rule, {rule, runs: [...], summary: {...}}.
    ``timings`` holds wall-clock seconds and is the only nondeterministic field.
    """

    experiment: str
    config: dict
    variance: list = field(default_factory=list)
    radius: list = field(default_factory=list)
    training: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "experiment": self.experiment,
            "config": self.config,
            "variance": self.variance,
            "radius": self.radius,
            "training": self.training,
        }
        if include_timings:
            d["timings"] = self.timings
        return json_safe(d)

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), allow_nan=False, sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            experiment=d["experiment"],
            config=d["config"],
            variance=d.get("variance", []),
            radius=d.get("radius", []),
            training=d.get("training", []),
            timings=d.get("timings", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    def csv_rows(self) -> list[list]:
        rows = []
        exp = self.experiment
        v = CSV_SCHEMA_VERSION
        for r in self.variance:
            for metric in ("mean_coord_variance", "stderr"):
                rows.append([v, exp, r["D"], r["q"], "", "", metric, r[metric]])
            for i, val in enumerate(r.get("per_rep_mean", [])):
                rows.append([v, exp, r["D"], r["q"], "", i, "per_rep_grad_mean_norm", val])
        for r in self.radius:
            rows.append([v, exp, r["D"], r["q"], "", "", "radius", r["radius"]])
        for block in self.training:
            for run in block["runs"]:
                for metric in ("final_accuracy", "final_loss"):
                    rows.append([v, exp, "", block.get("q", ""), block["rule"], run["seed"], metric, run[metric]])
        return rows

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(CSV_COLUMNS)
            for row in self.csv_rows():
                w.writerow([repr(c) if isinstance(c, float) else c for c in row])

    def write_json(self, path, include_timings: bool = True) -> None:
        Path(path).write_text(self.to_json(include_timings) + "\n", encoding="utf-8")
