"""Backhaul-aware WMMSE beamforming for a fixed user association.

Users have one antenna, so receivers, MSEs and MSE weights are scalars per
active link (i, j). Every per-link quantity is stored as an (N_B+1, N_U)
array that is meaningful only where the link is active.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelSet
from .rates import (
    Association,
    BeamformerSet,
    cross_gains,
    rf_rate_matrix,
    sum_rate,
)

E_FLOOR = 1e-12
BISECTION_RTOL = 1e-13


@dataclass
class WmmseState:
    mask: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @property
    def served_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.mask]


@dataclass
class BeamformingTrace:
    true_objective: list[float] = field(default_factory=list)
    weighted_rate: list[float] = field(default_factory=list)
    block_objective: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def desired_amplitude(ch: ChannelSet, bf: BeamformerSet) -> np.ndarray:
    """a_ij = h_ij^H w_ij for every pair."""
    return np.array([np.sum(h.conj() * w, axis=0) for h, w in zip(ch.h, bf.w)])


def received_power(g: np.ndarray, mask, noise: float) -> np.ndarray:
    """Total power at each user from all active streams, plus noise."""
    return np.einsum("bju,bu->j", g, np.asarray(mask, dtype=float)) + noise


def update_tau_lambda(ch: ChannelSet, mask, bf: BeamformerSet, g=None):
    """HAPS rate terms tau_0j = min(RF, backhaul) and their 0/1 weights.

    lambda_0j is 1 when the RF rate is the binding term (ties included) and 0
    when the backhaul is; every ground-BS link keeps weight 1.
    """
    mask = np.asarray(mask, dtype=bool)
    rf0 = rf_rate_matrix(ch, mask, bf, g)[0]
    tau = np.where(mask[0], np.minimum(rf0, ch.fso_rate_bps), 0.0)
    lam = np.ones(mask.shape)
    lam[0] = np.where(rf0 <= ch.fso_rate_bps, 1.0, 0.0)
    return tau, lam


def mmse_receivers(ch: ChannelSet, mask, bf: BeamformerSet, g=None) -> np.ndarray:
    if g is None:
        g = cross_gains(ch, bf)
    total = received_power(g, mask, ch.noise_power_watts)
    u = desired_amplitude(ch, bf) / total[None, :]
    return np.where(mask, u, 0.0)


def mmse_receiver(ch: ChannelSet, a: Association, bf: BeamformerSet, i: int, j: int,
                  gamma=None) -> complex:
    mask = a.alpha > 0 if gamma is None else a.active(gamma)
    g = cross_gains(ch, bf)
    total = received_power(g, mask, ch.noise_power_watts)[j]
    return complex(np.sum(ch.h[i][:, j].conj() * bf.w[i][:, j]) / total)


def mse_matrix(ch: ChannelSet, mask, bf: BeamformerSet, u, g=None) -> np.ndarray:
    """Scalar MSE of every link for receivers ``u``; interference counts all
    active streams other than the link itself."""
    if g is None:
        g = cross_gains(ch, bf)
    mask = np.asarray(mask, dtype=bool)
    amp = desired_amplitude(ch, bf)
    total = received_power(g, mask, ch.noise_power_watts)[None, :]
    others = total - np.where(mask, np.abs(amp) ** 2, 0.0)
    u = np.asarray(u)
    return np.abs(1.0 - u.conj() * amp) ** 2 + np.abs(u) ** 2 * others


def mse(ch: ChannelSet, a: Association, bf: BeamformerSet, u: complex, i: int, j: int) -> float:
    """MSE of link (i, j) at receiver ``u``."""
    uu = np.zeros(a.alpha.shape, dtype=complex)
    uu[i, j] = u
    return float(mse_matrix(ch, a.alpha > 0, bf, uu)[i, j])


def mse_weight(e):
    return 1.0 / np.maximum(e, E_FLOOR)


def wmmse_objective(mask, lam, rho, e) -> float:
    """sum over active links of lambda * (rho * e - ln rho)."""
    mask = np.asarray(mask, dtype=bool)
    rho_safe = np.where(mask, rho, 1.0)
    terms = lam * (rho_safe * e - np.log(rho_safe))
    return float(np.sum(np.where(mask, terms, 0.0)))


def weighted_sum_rate(ch: ChannelSet, mask, bf: BeamformerSet, lam, g=None) -> float:
    """sum of lambda_ij * R_ij^RF over active links."""
    r = rf_rate_matrix(ch, mask, bf, g)
    return float(np.sum(np.where(mask, lam * r, 0.0)))


def _power_at(mu, vals, p):
    return float(np.sum(p / (vals + mu) ** 2))


def transmit_update(ch: ChannelSet, state: WmmseState, bf: BeamformerSet, i: int, p_max: float):
    """Optimal beams of transmitter ``i`` for fixed receivers and weights.

    Solves min sum_l lambda rho (MSE terms touching transmitter i) subject to
    the transmitter's power budget. The solution is
    w_ij = (A_i + mu I)^-1 h_ij u_ij rho_ij lambda_ij with mu found by
    bisection when the unconstrained solution exceeds the budget. Columns of
    users not served by ``i`` are returned untouched.

    Returns the new (N_A^i, N_U) block and the multiplier mu.
    """
    H = ch.h[i]
    served = np.flatnonzero(state.mask[i])
    block = bf.w[i].copy()
    if served.size == 0:
        return block, 0.0
    weight = np.where(state.mask, state.lam * state.rho * np.abs(state.u) ** 2, 0.0).sum(axis=0)
    A = (H * weight[None, :]) @ H.conj().T
    B = H[:, served] * (state.u[i, served] * state.rho[i, served] * state.lam[i, served])[None, :]
    vals, V = np.linalg.eigh(A)
    vals = np.maximum(vals, 0.0)
    C = V.conj().T @ B
    # directions outside the range of A carry no part of B (up to rounding)
    null = vals <= 1e-12 * max(vals.max(initial=0.0), 1e-300)
    C[null] = 0.0
    vals = np.where(null, 1.0, vals)
    p = np.sum(np.abs(C) ** 2, axis=1)
    if not p.any():
        block[:, served] = 0.0
        return block, 0.0
    mu = 0.0
    if _power_at(0.0, vals, p) > p_max:
        lo, hi = 0.0, 1.0
        while _power_at(hi, vals, p) > p_max:
            lo, hi = hi, hi * 2.0
        for _ in range(200):
            if p_max - _power_at(hi, vals, p) <= BISECTION_RTOL * p_max:
                break
            mid = 0.5 * (lo + hi)
            if _power_at(mid, vals, p) > p_max:
                lo = mid
            else:
                hi = mid
        mu = hi
    block[:, served] = V @ (C / (vals + mu)[:, None])
    return block, mu


def wmmse_step(ch: ChannelSet, mask, bf: BeamformerSet, lam, p_max, g=None, record=None,
               rho_prev=None, tau=None):
    """One receiver / weight / transmitter pass for fixed lambda.

    When ``record`` is a list, the WMMSE objective after each block update
    is appended to it (the receiver update is only logged once a previous
    weight exists). Returns (new beams, state).
    """
    if g is None:
        g = cross_gains(ch, bf)
    u = mmse_receivers(ch, mask, bf, g)
    e = mse_matrix(ch, mask, bf, u, g)
    if record is not None and rho_prev is not None:
        record.append(wmmse_objective(mask, lam, rho_prev, e))
    rho = np.where(mask, mse_weight(e), 0.0)
    if record is not None:
        record.append(wmmse_objective(mask, lam, rho, e))
    state = WmmseState(mask=np.asarray(mask, dtype=bool), u=u, rho=rho,
                       tau=np.zeros(mask.shape[1]) if tau is None else tau, lam=lam, mu=np.zeros(len(ch.h)))
    blocks = []
    for i in range(len(ch.h)):
        block, state.mu[i] = transmit_update(ch, state, bf, i, float(p_max[i]))
        blocks.append(block)
    new = BeamformerSet(tuple(blocks))
    if record is not None:
        e_new = mse_matrix(ch, mask, new, u)
        record.append(wmmse_objective(mask, lam, rho, e_new))
    return new, state


def seed_silent_links(ch: ChannelSet, mask, bf: BeamformerSet, p_max) -> BeamformerSet:
    """Give active links with an all-zero beam a matched-filter direction.

    A zero beam is a fixed point of the receiver / transmit updates (u = 0
    zeroes the numerator), so such links would never switch on. They share
    whatever power their transmitter has left, equally.
    """
    mask = np.asarray(mask, dtype=bool)
    blocks = list(bf.w)
    for i, (H, W) in enumerate(zip(ch.h, bf.w)):
        norms = np.linalg.norm(H, axis=0)
        silent = mask[i] & ~np.any(W != 0, axis=0) & (norms > 0)
        if not silent.any():
            continue
        left = float(p_max[i]) - float(np.sum(np.abs(W[:, mask[i]]) ** 2))
        if left <= 0:
            continue
        W = W.astype(complex)
        idx = np.flatnonzero(silent)
        W[:, idx] = np.sqrt(left / idx.size) * H[:, idx] / norms[idx]
        blocks[i] = W
    return BeamformerSet(tuple(blocks))


def algorithm2_beamform(ch: ChannelSet, a: Association, init: BeamformerSet, p_max,
                        gamma=None, eps: float = 1e-4, max_iters: int = 100,
                        lam: Optional[np.ndarray] = None, record_blocks: bool = False):
    """Alternate tau/lambda, receiver, MSE-weight and transmit updates.

    Passing ``lam`` freezes the rate weights instead of recomputing them from
    the HAPS rates each pass. The true sum-rate is tracked every pass and the
    best beams seen (the initial ones included) are returned together with a
    :class:`BeamformingTrace`.
    """
    gamma = np.ones_like(a.alpha) if gamma is None else np.asarray(gamma)
    mask = a.active(gamma)
    p_max = np.asarray(p_max, dtype=float)
    trace = BeamformingTrace()
    bf = seed_silent_links(ch, mask, init, p_max)
    g = cross_gains(ch, bf)
    r = sum_rate(ch, mask, bf, g)
    trace.true_objective.append(r)
    best, best_bf = r, bf
    prev = r
    rho_prev = None
    record = trace.block_objective if record_blocks else None
    for m in range(max_iters):
        tau, cur_lam = update_tau_lambda(ch, mask, bf, g)
        if lam is not None:
            cur_lam = lam
        if m == 0:
            trace.weighted_rate.append(weighted_sum_rate(ch, mask, bf, cur_lam, g))
        bf, state = wmmse_step(ch, mask, bf, cur_lam, p_max, g, record, rho_prev, tau)
        rho_prev = state.rho
        g = cross_gains(ch, bf)
        r = sum_rate(ch, mask, bf, g)
        trace.true_objective.append(r)
        trace.weighted_rate.append(weighted_sum_rate(ch, mask, bf, cur_lam, g))
        trace.iterations = m + 1
        if r > best:
            best, best_bf = r, bf
        if abs(r - prev) <= eps * max(abs(r), abs(prev), 1e-300):
            trace.converged = True
            break
        prev = r
    return best_bf, trace
