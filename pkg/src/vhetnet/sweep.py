"""Monte-Carlo parameter sweeps over independent (scenario, channel) draws."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .channel import draw_channels
from .orchestrator import METHODS, SolverParams, algorithm3_solve
from .scenario import generate_scenario

AXES = {
    "users": None,
    "fso_rate": "fso_rate_bps",
    "haps_antennas": "haps_antennas",
    "haps_power": "haps_power_w",
    "shadowing": "shadowing_sigma_db",
}
CSV_COLUMNS = ("method", "axis_value", "trial", "sum_rate_bps", "delta", "iters", "wall_ms")


@dataclass(frozen=True)
class ScenarioSpec:
    layout: str = "medium"
    n_users: int = 20
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def build(self, axis: str, value, seed: int):
        overrides = dict(self.overrides)
        n_users = self.n_users
        if axis == "users":
            n_users = int(value)
        else:
            overrides[AXES[axis]] = value
        return generate_scenario(self.layout, seed, n_users, overrides)


@dataclass
class SweepResult:
    axis: str
    rows: list[dict] = field(default_factory=list)

    def cells(self):
        out: dict[tuple, list[dict]] = {}
        for r in self.rows:
            out.setdefault((r["method"], r["axis_value"]), []).append(r)
        return out

    def summary(self) -> list[dict]:
        cells = []
        for (method, value), rows in self.cells().items():
            rate = np.array([r["sum_rate_bps"] for r in rows])
            delta = np.array([r["delta"] for r in rows])
            cells.append({
                "method": method,
                "axis_value": value,
                "n_trials": len(rows),
                "sum_rate_mean_bps": float(rate.mean()),
                "sum_rate_stderr_bps": _stderr(rate),
                "delta_mean": float(delta.mean()),
                "delta_stderr": _stderr(delta),
            })
        return cells

    def mean(self, method: str, value, key: str = "sum_rate_bps") -> float:
        return float(np.mean([r[key] for r in self.cells()[(method, value)]]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            wall = "" if r["wall_ms"] is None else repr(r["wall_ms"])
            w.writerow([r["method"], repr(r["axis_value"]), r["trial"], repr(r["sum_rate_bps"]),
                        repr(r["delta"]), r["iters"], wall])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"axis": self.axis, "cells": self.summary()}, indent=2)


def _stderr(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(len(x)))


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int]:
    """(scenario seed, channel seed) for one trial.

    Every axis value and method reuses the draws of a given trial index, so
    cells differ only by the swept parameter.
    """
    digest = hashlib.sha256(f"{master_seed}:{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:16], "little")


def _run_trial(task):
    base, axis, value, trial, master_seed, params, methods, record_time = task
    s_seed, c_seed = trial_seeds(master_seed, trial)
    s = base.build(axis, value, s_seed)
    ch = draw_channels(s, c_seed)
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        rep = algorithm3_solve(s, ch, replace(params, method=method))
        wall = (time.perf_counter() - t0) * 1e3 if record_time else None
        rows.append({
            "method": method,
            "axis_value": value,
            "trial": trial,
            "sum_rate_bps": rep.sum_rate_bps,
            "delta": rep.delta,
            "iters": rep.outer_iterations,
            "wall_ms": wall,
        })
    return rows


def _coerce(axis: str, value):
    if axis in ("users", "haps_antennas"):
        if float(value) != int(float(value)) or int(float(value)) < 1:
            raise ValueError(f"axis {axis} needs positive integer values, got {value!r}")
        return int(float(value))
    return float(value)


def monte_carlo_sweep(base: ScenarioSpec, axis: str, values: Sequence, n_trials: int,
                      params: SolverParams = SolverParams(), methods: Sequence[str] = METHODS,
                      master_seed: int = 0, jobs: int = 1, record_time: bool = False) -> SweepResult:
    """Run every method on ``n_trials`` draws per axis value.

    Trials are farmed out to ``jobs`` worker processes; results come back
    in (axis value, trial, method) order, so the table does not depend on
    the worker count. Wall times are only recorded with ``record_time``.
    """
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {', '.join(AXES)}")
    if not values:
        raise ValueError("empty value list")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    values = [_coerce(axis, v) for v in values]
    tasks = [
        (base, axis, v, t, master_seed, params, tuple(methods), record_time)
        for v in values for t in range(n_trials)
    ]
    if jobs <= 1:
        chunks = [_run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial, tasks))
    result = SweepResult(axis=axis)
    for rows in chunks:
        result.rows.extend(rows)
    return result
