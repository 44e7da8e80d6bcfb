"""User association for fixed beamformers: ILP seed + iterated GAP, and two greedy baselines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import AssignmentInstance, solve_assignment_bnb
from .channel import ChannelSet
from .rates import (
    Association,
    BeamformerSet,
    cross_gains,
    full_interference_rate_matrix,
    interference_free_rate_matrix,
    rf_rate_matrix,
    sum_rate,
)
from .scenario import Scenario


@dataclass
class AssociationTrace:
    sum_rates: list[float] = field(default_factory=list)
    t0: list[np.ndarray] = field(default_factory=list)
    best_sum_rate: float = 0.0
    association: Association | None = None

    @property
    def iterations(self) -> int:
        return len(self.sum_rates) - 1

    @property
    def best_so_far(self) -> list[float]:
        return list(np.maximum.accumulate(self.sum_rates))


def _instance(s: Scenario, profit, bf: BeamformerSet) -> AssignmentInstance:
    return AssignmentInstance(
        profit=profit,
        weight=bf.power(),
        capacity=s.p_max,
        haps_cap=s.haps_user_cap,
        gamma=s.gamma,
    )


def solve_ilp_seed(s: Scenario, ch: ChannelSet, bf: BeamformerSet, g=None) -> Association:
    """Association maximising the linearised objective.

    Ground-BS profits are the rates with every stored beam interfering; HAPS
    profits are those rates capped by the backhaul. Links left unassociated
    simply carry no power or signal afterwards, which is how the bounding
    constraint tying beam power to the association is honoured here.
    """
    if g is None:
        g = cross_gains(ch, bf)
    profit = full_interference_rate_matrix(ch, bf, g)
    profit[0] = np.minimum(profit[0], ch.fso_rate_bps)
    return solve_assignment_bnb(_instance(s, profit, bf))


def _haps_t(ch, mask, bf, g):
    return np.minimum(rf_rate_matrix(ch, mask, bf, g)[0], ch.fso_rate_bps)


def algorithm1_associate(s: Scenario, ch: ChannelSet, bf: BeamformerSet,
                         eps: float = 1e-4, max_iters: int = 20) -> AssociationTrace:
    """ILP seed followed by GAP re-solves with refreshed HAPS profits.

    Ground-BS profits in the GAP are the interference-free rates; the HAPS
    profit of each user is min(true RF rate under the current association,
    backhaul rate). The loop stops when the true sum-rate changes by at most
    ``eps`` relative, and the best association seen is returned.
    """
    g = cross_gains(ch, bf)
    gamma = s.gamma
    trace = AssociationTrace()

    alpha = solve_ilp_seed(s, ch, bf, g)
    mask = alpha.active(gamma)
    r = sum_rate(ch, mask, bf, g)
    t0 = _haps_t(ch, mask, bf, g)
    trace.sum_rates.append(r)
    trace.t0.append(t0)
    best, best_alpha = r, alpha

    gap_profit = interference_free_rate_matrix(ch, bf, g)
    prev = r
    for _ in range(max_iters):
        profit = gap_profit.copy()
        profit[0] = t0
        alpha = solve_assignment_bnb(_instance(s, profit, bf))
        mask = alpha.active(gamma)
        r = sum_rate(ch, mask, bf, g)
        t0 = _haps_t(ch, mask, bf, g)
        trace.sum_rates.append(r)
        trace.t0.append(t0)
        if r > best:
            best, best_alpha = r, alpha
        if abs(r - prev) <= eps * max(abs(r), abs(prev), 1e-300):
            break
        prev = r

    trace.best_sum_rate = best
    trace.association = best_alpha
    return trace


def _greedy_match(score: np.ndarray, s: Scenario, largest_first: bool) -> Association:
    T, U = score.shape
    slots = s.n_antennas.copy()
    slots[0] = s.haps_user_cap
    key = -score if largest_first else score
    key = np.where(s.gamma > 0, key, np.inf)
    order = np.argsort(key, axis=None, kind="stable")
    served = np.full(U, -1)
    n_left = U
    for flat in order:
        i, j = divmod(int(flat), U)
        if not np.isfinite(key[i, j]):
            break
        if served[j] != -1 or slots[i] == 0:
            continue
        served[j] = i
        slots[i] -= 1
        n_left -= 1
        if n_left == 0 or not slots.any():
            break
    return Association.from_served_by(served, T)


def baseline_distance(s: Scenario) -> Association:
    """Repeatedly match the closest remaining (transmitter, user) pair."""
    return _greedy_match(s.distances(), s, largest_first=False)


def baseline_channel(ch: ChannelSet, s: Scenario) -> Association:
    """Repeatedly match the remaining pair with the largest ||h_ij||^2."""
    return _greedy_match(ch.gains(), s, largest_first=True)
