"""Exact branch-and-bound for the capacitated assignment problem.

Maximise ``sum gamma_ij * alpha_ij * p_ij`` subject to a knapsack per
transmitter (weights ``||w_ij||^2`` against ``P_i^max``), a cardinality cap on
the HAPS row and at most one transmitter per user. Leaving a user unassigned
is always allowed and earns nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linear_sum_assignment, milp
from scipy.sparse import coo_matrix

from .rates import Association, UNSERVED

_PRUNE_RTOL = 1e-12
# knapsack slack, matches the power-feasibility tolerance used elsewhere
CAP_RTOL = 1e-9


class InstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AssignmentInstance:
    profit: np.ndarray
    weight: np.ndarray
    capacity: np.ndarray
    haps_cap: int
    gamma: np.ndarray

    def __post_init__(self):
        profit = np.asarray(self.profit, dtype=float)
        weight = np.asarray(self.weight, dtype=float)
        capacity = np.asarray(self.capacity, dtype=float)
        gamma = np.asarray(self.gamma)
        if profit.ndim != 2 or weight.shape != profit.shape or gamma.shape != profit.shape:
            raise InstanceError("profit, weight and gamma must share one (N_B+1, N_U) shape")
        if capacity.shape != (profit.shape[0],):
            raise InstanceError("capacity needs one entry per transmitter")
        if not np.all(np.isfinite(profit)) or np.any(profit < 0):
            raise InstanceError("profits must be finite and >= 0")
        if not np.all(np.isfinite(weight)) or np.any(weight < 0):
            raise InstanceError("weights must be finite and >= 0")
        if np.any(capacity <= 0):
            raise InstanceError("capacities must be > 0")
        if not np.isin(gamma, (0, 1)).all():
            raise InstanceError("gamma must be binary")
        if int(self.haps_cap) != self.haps_cap or self.haps_cap < 0:
            raise InstanceError("haps_cap must be a nonnegative integer")
        object.__setattr__(self, "profit", profit)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "capacity", capacity)
        object.__setattr__(self, "gamma", gamma.astype(np.int8))
        object.__setattr__(self, "haps_cap", int(self.haps_cap))

    @property
    def shape(self):
        return self.profit.shape


def assignment_value(inst: AssignmentInstance, a: Association) -> float:
    return float(np.sum(inst.gamma * a.alpha * inst.profit))


def is_feasible(inst: AssignmentInstance, a: Association) -> bool:
    m = inst.gamma * a.alpha
    if np.any(a.alpha > inst.gamma) or np.any(m.sum(axis=0) > 1):
        return False
    if m[0].sum() > inst.haps_cap:
        return False
    used = np.sum(m * inst.weight, axis=1)
    return bool(np.all(used <= inst.capacity * (1 + CAP_RTOL)))


class _Search:
    def __init__(self, inst: AssignmentInstance):
        self.inst = inst
        T, U = inst.shape
        self.slack = CAP_RTOL * inst.capacity
        useful = (inst.gamma > 0) & (inst.profit > 0) & (inst.weight <= (inst.capacity + self.slack)[:, None])
        if inst.haps_cap == 0:
            useful[0] = False
        # profit of options that can ever be taken, 0 elsewhere
        self.P = np.where(useful, inst.profit, 0.0)
        self.W = inst.weight
        self.useful = useful
        self.options = []
        for j in range(U):
            opts = sorted((-self.P[i, j], i) for i in range(T) if useful[i, j])
            self.options.append([i for _, i in opts])
        top = -np.sort(-self.P, axis=0)
        spread = top[0] - (top[1] if T > 1 else 0.0)
        users = [j for j in range(U) if self.options[j]]
        self.order = sorted(users, key=lambda j: (-spread[j], j))
        self.best_value = -1.0
        self.best_choice = None
        self.nodes = 0

    def greedy(self):
        inst = self.inst
        rem = inst.capacity.copy()
        haps_left = inst.haps_cap
        choice = np.full(inst.shape[1], UNSERVED)
        value = 0.0
        pairs = sorted(zip(*np.nonzero(self.useful)), key=lambda ij: (-self.P[ij], ij[0], ij[1]))
        for i, j in pairs:
            if choice[j] != UNSERVED or self.W[i, j] > rem[i] + self.slack[i]:
                continue
            if i == 0 and haps_left == 0:
                continue
            choice[j] = i
            rem[i] -= self.W[i, j]
            haps_left -= i == 0
            value += self.P[i, j]
        return choice, value

    def bound(self, users, rem, haps_left):
        """Upper bound on the profit obtainable from ``users``.

        The cheap bound gives each user its best individually-fitting option.
        The tighter one replaces every knapsack by the largest number of its
        candidate items that can fit together and solves the resulting
        slot-assignment problem exactly.

        Returns (bound, witness). ``witness`` maps each of ``users`` to a
        transmitter (or UNSERVED) when the relaxed optimum happens to respect
        the real knapsacks, in which case the bound is attained; else None.
        """
        if not users:
            return 0.0, np.zeros(0, dtype=int)
        P = self.P[:, users]
        fit = (self.W[:, users] <= (rem + self.slack)[:, None]) & (P > 0)
        if haps_left <= 0:
            fit[0] = False
        Pf = np.where(fit, P, 0.0)
        cheap = float(Pf.max(axis=0).sum())
        if cheap <= self._threshold():
            return cheap, None
        w_sorted = np.sort(np.where(fit, self.W[:, users], np.inf), axis=1)
        slots = np.sum(np.cumsum(w_sorted, axis=1) <= (rem + self.slack)[:, None], axis=1)
        slots[0] = min(slots[0], haps_left)
        slots = np.minimum(slots, fit.sum(axis=1))
        if slots.sum() == 0:
            return 0.0, np.full(len(users), UNSERVED)
        owner = np.repeat(np.arange(len(rem)), slots)
        cols = Pf[owner].T
        r, c = linear_sum_assignment(cols, maximize=True)
        relaxed = min(cheap, float(cols[r, c].sum()))
        witness = np.full(len(users), UNSERVED)
        taken = cols[r, c] > 0
        witness[r[taken]] = owner[c[taken]]
        load = np.zeros(len(rem))
        np.add.at(load, witness[r[taken]], self.W[witness[r[taken]], np.asarray(users)[r[taken]]])
        if np.all(load <= rem + self.slack):
            return relaxed, witness
        return relaxed, None

    def _threshold(self):
        return self.best_value + _PRUNE_RTOL * max(1.0, abs(self.best_value))

    def run(self):
        inst = self.inst
        choice, value = self.greedy()
        self.best_choice, self.best_value = choice.copy(), value
        current = np.full(inst.shape[1], UNSERVED)
        self._dfs(0, current, 0.0, inst.capacity.copy(), inst.haps_cap)
        return self.best_choice, self.best_value

    def _dfs(self, k, current, value, rem, haps_left):
        self.nodes += 1
        if k == len(self.order):
            if value > self._threshold():
                self.best_value = value
                self.best_choice = current.copy()
            return
        users = self.order[k:]
        bnd, witness = self.bound(users, rem, haps_left)
        if value + bnd <= self._threshold():
            return
        if witness is not None:
            # relaxed optimum is feasible, hence optimal for this subtree
            self.best_value = value + bnd
            self.best_choice = current.copy()
            self.best_choice[users] = witness
            return
        j = self.order[k]
        for i in self.options[j]:
            if self.W[i, j] > rem[i] + self.slack[i] or (i == 0 and haps_left == 0):
                continue
            current[j] = i
            rem[i] -= self.W[i, j]
            self._dfs(k + 1, current, value + self.P[i, j], rem, haps_left - (i == 0))
            rem[i] += self.W[i, j]
            current[j] = UNSERVED
        self._dfs(k + 1, current, value, rem, haps_left)


def _milp_choice(inst: AssignmentInstance, max_cuts: int = 50):
    """Optimal served-by vector from HiGHS branch-and-cut.

    HiGHS lets a knapsack row overshoot by about 1e-7, more than CAP_RTOL.
    When its answer overfills transmitter i with user set S, the cover cut
    sum_{j in S} x_ij <= |S| - 1 is added and the model re-solved; the cut
    only removes assignments that really are infeasible. Returns None if
    the solver fails or the cut budget runs out.
    """
    T, U = inst.shape
    useful = (inst.gamma > 0) & (inst.profit > 0)
    if inst.haps_cap == 0:
        useful[0] = False
    ii, jj = np.nonzero(useful)
    n = len(ii)
    choice = np.full(U, UNSERVED)
    if n == 0:
        return choice
    col = np.arange(n)
    haps = col[ii == 0]
    # one row per user, one knapsack row per transmitter, then the HAPS count
    rows = [np.concatenate([jj, U + ii, np.full(len(haps), U + T)])]
    cols = [np.concatenate([col, col, haps])]
    vals = [np.concatenate([np.ones(n), inst.weight[ii, jj] / inst.capacity[ii], np.ones(len(haps))])]
    ub = [np.ones(U), np.ones(T), [inst.haps_cap]]
    n_rows = U + T + 1
    for _ in range(max_cuts + 1):
        A = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n_rows, n)).tocsr()
        res = milp(
            -inst.profit[ii, jj],
            constraints=LinearConstraint(A, -np.inf, np.concatenate(ub)),
            integrality=np.ones(n),
            bounds=Bounds(0, 1),
            options={"mip_rel_gap": 0.0},
        )
        if res.x is None:
            return None
        take = res.x > 0.5
        load = np.zeros(T)
        np.add.at(load, ii[take], inst.weight[ii[take], jj[take]])
        over = np.flatnonzero(load > inst.capacity * (1 + CAP_RTOL))
        if over.size == 0:
            choice[jj[take]] = ii[take]
            return choice
        for i in over:
            cover = col[take & (ii == i)]
            rows.append(np.full(len(cover), n_rows))
            cols.append(cover)
            vals.append(np.ones(len(cover)))
            ub.append([len(cover) - 1])
            n_rows += 1
    return None


def _search_choice(inst: AssignmentInstance):
    """Plain depth-first search; slow on loose knapsacks but needs no LP."""
    return _Search(inst).run()[0]


def solve_assignment_bnb(inst: AssignmentInstance) -> Association:
    """Exact optimum of the assignment instance.

    HiGHS branch-and-cut does the work. Its feasibility tolerance is looser
    than ours, so an answer that overfills a knapsack is discarded and the
    in-house search settles the instance instead.
    """
    choice = _milp_choice(inst)
    if choice is None:
        choice = _search_choice(inst)
    return Association.from_served_by(choice, inst.shape[0])


def solve_assignment_stats(inst: AssignmentInstance):
    """In-house search only; returns (association, value, nodes visited)."""
    s = _Search(inst)
    choice, value = s.run()
    return Association.from_served_by(choice, inst.shape[0]), value, s.nodes
