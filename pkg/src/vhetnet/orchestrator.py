"""Alternating association / beamforming solver and its summary metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .association import algorithm1_associate, baseline_channel, baseline_distance
from .beamforming import algorithm2_beamform
from .channel import ChannelSet
from .rates import Association, BeamformerSet, RateBreakdown, network_sum_rate, sum_rate
from .scenario import Scenario

METHODS = ("IG_WMMSE", "CD_WMMSE", "DD_WMMSE", "IG_only", "CD_only", "DD_only")


@dataclass(frozen=True)
class SolverParams:
    method: str = "IG_WMMSE"
    eps_outer: float = 1e-4
    eps_assoc: float = 1e-4
    eps_beam: float = 1e-4
    max_outer: int = 10
    max_assoc: int = 20
    max_beam: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if min(self.eps_outer, self.eps_assoc, self.eps_beam) <= 0:
            raise ValueError("tolerances must be > 0")
        if min(self.max_outer, self.max_assoc, self.max_beam) < 1:
            raise ValueError("iteration caps must be >= 1")

    @property
    def association_rule(self) -> str:
        return self.method.split("_")[0]

    @property
    def uses_wmmse(self) -> bool:
        return self.method.endswith("WMMSE")


@dataclass
class SolveReport:
    association: Association
    beamformers: BeamformerSet
    rates: RateBreakdown
    delta: float
    trace: list[float] = field(default_factory=list)
    wall_time_s: float = 0.0
    method: str = ""

    @property
    def sum_rate_bps(self) -> float:
        return self.rates.sum_rate_bps

    @property
    def outer_iterations(self) -> int:
        return len(self.trace)


def init_beamformers(ch: ChannelSet, s: Scenario) -> BeamformerSet:
    """Matched-filter beams with the budget split evenly over the links a
    transmitter could serve at once."""
    blocks = []
    for i, (h, tx) in enumerate(zip(ch.h, s.transmitters)):
        avail = s.gamma[i] > 0
        cap = s.haps_user_cap if i == 0 else tx.n_antennas
        n_pot = min(int(avail.sum()), cap)
        w = np.zeros_like(h)
        if n_pot > 0:
            norms = np.linalg.norm(h, axis=0)
            ok = avail & (norms > 0)
            w[:, ok] = np.sqrt(tx.p_max_watts / n_pot) * h[:, ok] / norms[ok]
        blocks.append(w)
    return BeamformerSet(tuple(blocks))


def candidate_beams(bf: BeamformerSet, init: BeamformerSet, mask) -> BeamformerSet:
    """Beams offered to the association step.

    Active links keep their current beams. Links that are inactive, or that
    WMMSE switched off, fall back to the matched-filter start so every pair
    stays a real option; the knapsacks keep any chosen set within budget.
    """
    blocks = []
    for i, (w, w0) in enumerate(zip(bf.w, init.w)):
        keep = np.asarray(mask[i], dtype=bool) & (np.linalg.norm(w, axis=0) > 0)
        blocks.append(np.where(keep[None, :], w, w0))
    return BeamformerSet(tuple(blocks))


def compute_delta(a: Association, s: Scenario) -> float:
    """Fraction of users served by the HAPS."""
    return float(np.sum(a.alpha[0] * s.gamma[0])) / s.n_users


def algorithm3_solve(s: Scenario, ch: ChannelSet, p: SolverParams) -> SolveReport:
    """Alternate association and WMMSE until the sum-rate settles.

    IG re-runs the ILP/GAP association every outer pass; the distance and
    channel baselines do not depend on the beams and are computed once. The
    *_only methods keep the initial beams. The best (association, beams)
    pair seen is reported.
    """
    start = time.perf_counter()
    init = bf = init_beamformers(ch, s)
    mask = np.zeros(s.gamma.shape, dtype=bool)
    rule = p.association_rule
    frozen = None
    if rule == "DD":
        frozen = baseline_distance(s)
    elif rule == "CD":
        frozen = baseline_channel(ch, s)

    trace: list[float] = []
    best = (-np.inf, None, None)
    prev = None
    for _ in range(p.max_outer):
        if frozen is None:
            cand = candidate_beams(bf, init, mask)
            a_new = algorithm1_associate(s, ch, cand, p.eps_assoc, p.max_assoc).association
            # association step must not lower the objective of the current pair
            if prev is None or sum_rate(ch, a_new.active(s.gamma), cand) >= prev:
                a, bf = a_new, cand
        else:
            a = frozen
        mask = a.active(s.gamma)
        if p.uses_wmmse:
            bf, _ = algorithm2_beamform(ch, a, bf, s.p_max, s.gamma, p.eps_beam, p.max_beam)
        r = sum_rate(ch, mask, bf)
        trace.append(r)
        if r > best[0]:
            best = (r, a, bf)
        if not p.uses_wmmse:
            # beams never change, so every further pass repeats this one
            break
        if prev is not None and abs(r - prev) <= p.eps_outer * max(abs(r), abs(prev), 1e-300):
            break
        prev = r

    _, a, bf = best
    rates = network_sum_rate(ch, a, bf, s.gamma, s.p_max)
    return SolveReport(
        association=a,
        beamformers=bf,
        rates=rates,
        delta=compute_delta(a, s),
        trace=trace,
        wall_time_s=time.perf_counter() - start,
        method=p.method,
    )


def report_to_dict(report: SolveReport, include_time: bool = False) -> dict:
    """JSON-ready view of a solve. Wall time is left out unless asked for so
    that repeated runs serialise identically."""
    out = {
        "method": report.method,
        "sum_rate_bps": report.sum_rate_bps,
        "delta": report.delta,
        "served_by": [int(v) for v in report.rates.served_by],
        "per_user_rate_bps": [float(v) for v in report.rates.per_user_rate_bps],
        "power_used_watts": [float(v) for v in report.rates.power_used_watts],
        "power_violation": [bool(v) for v in report.rates.power_violation],
        "trace_sum_rate_bps": [float(v) for v in report.trace],
        "best_so_far_bps": [float(v) for v in np.maximum.accumulate(report.trace)],
    }
    if include_time:
        out["wall_time_s"] = report.wall_time_s
    return out
