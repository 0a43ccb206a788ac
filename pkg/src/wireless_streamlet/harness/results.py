"""Result tables with Student-t confidence intervals and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

CSV_HEADER = ["experiment", "sweep_variable", "policy_mode", "metric", "mean", "ci95", "runs", "seed"]


def mean_ci95(values: Sequence[float]) -> tuple:
    """Mean and 95% Student-t half-width; the half-width is 0 for a single value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values")
    m = float(arr.mean())
    if arr.size < 2:
        return m, 0.0
    sd = float(arr.std(ddof=1))
    return m, float(stats.t.ppf(0.975, arr.size - 1) * sd / math.sqrt(arr.size))


@dataclass
class ResultRow:
    experiment: str
    sweep_variable: str
    policy_mode: str
    metric: str
    values: List[float]
    seed: int

    @property
    def mean(self) -> float:
        return mean_ci95(self.values)[0]

    @property
    def ci95(self) -> float:
        return mean_ci95(self.values)[1]

    @property
    def runs(self) -> int:
        return len(self.values)


@dataclass
class ResultTable:
    config: Dict[str, Any] = field(default_factory=dict)
    rows: List[ResultRow] = field(default_factory=list)

    def add(self, experiment: str, sweep: str, policy: str, metric: str,
            values: Sequence[float], seed: int) -> ResultRow:
        row = ResultRow(experiment, sweep, policy, metric, [float(v) for v in values], seed)
        self.rows.append(row)
        return row

    def find(self, sweep: Optional[str] = None, policy: Optional[str] = None,
             metric: Optional[str] = None) -> List[ResultRow]:
        return [r for r in self.rows
                if (sweep is None or r.sweep_variable == sweep)
                and (policy is None or r.policy_mode == policy)
                and (metric is None or r.metric == metric)]

    def get(self, sweep: str, policy: str, metric: str) -> ResultRow:
        hits = self.find(sweep, policy, metric)
        if len(hits) != 1:
            raise KeyError((sweep, policy, metric))
        return hits[0]

    # -- serialization -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# config=" + json.dumps(self.config, sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.experiment, r.sweep_variable, r.policy_mode, r.metric,
                        repr(r.mean), repr(r.ci95), r.runs, r.seed])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "schema": CSV_HEADER,
            "config": self.config,
            "rows": [
                {
                    "experiment": r.experiment,
                    "sweep_variable": r.sweep_variable,
                    "policy_mode": r.policy_mode,
                    "metric": r.metric,
                    "mean": r.mean,
                    "ci95": r.ci95,
                    "runs": r.runs,
                    "seed": r.seed,
                    "values": r.values,
                }
                for r in self.rows
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        doc = json.loads(text)
        t = cls(config=doc.get("config", {}))
        for r in doc["rows"]:
            t.add(r["experiment"], r["sweep_variable"], r["policy_mode"], r["metric"],
                  r["values"], r["seed"])
        return t

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResultTable):
            return NotImplemented
        return self.to_json() == other.to_json()


def emit(table: ResultTable, fmt: str, path: Union[str, Path]) -> Path:
    """Write the table as ``csv`` or ``json`` (UTF-8, newline terminated)."""
    p = Path(path)
    if fmt == "csv":
        text = table.to_csv()
    elif fmt == "json":
        text = table.to_json()
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {p}: {exc.strerror}") from None
    return p
