"""Closed-form SINR and rate evaluation for an (association, beamformer) pair."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelSet

UNSERVED = -1
POWER_RTOL = 1e-9


class AssociationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Association:
    """Binary user association, shape (N_B+1, N_U); row 0 is the HAPS."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha)
        if a.ndim != 2 or not np.isin(a, (0, 1)).all():
            raise AssociationError("alpha must be a binary matrix")
        a = a.astype(np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def empty(cls, n_transmitters: int, n_users: int) -> "Association":
        return cls(np.zeros((n_transmitters, n_users), dtype=np.int8))

    @classmethod
    def from_served_by(cls, served_by, n_transmitters: int) -> "Association":
        served_by = np.asarray(served_by)
        alpha = np.zeros((n_transmitters, len(served_by)), dtype=np.int8)
        for j, i in enumerate(served_by):
            if i != UNSERVED:
                alpha[i, j] = 1
        return cls(alpha)

    @property
    def served_by(self) -> np.ndarray:
        out = np.full(self.alpha.shape[1], UNSERVED)
        i, j = np.nonzero(self.alpha)
        out[j] = i
        return out

    def active(self, gamma) -> np.ndarray:
        """gamma_ij * alpha_ij as a boolean mask."""
        return (self.alpha * np.asarray(gamma)) > 0

    def validate(self, gamma, haps_cap: int) -> None:
        gamma = np.asarray(gamma)
        if self.alpha.shape != gamma.shape:
            raise AssociationError("alpha and gamma shapes differ")
        if np.any(self.alpha > gamma):
            raise AssociationError("alpha assigns a user whose data is unavailable")
        m = self.active(gamma)
        if np.any(m.sum(axis=0) > 1):
            raise AssociationError("a user is served by more than one transmitter")
        if m[0].sum() > haps_cap:
            raise AssociationError("HAPS serves more users than its payload cap")

    def __eq__(self, other):
        if not isinstance(other, Association):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Transmit vectors; ``w[i][:, j]`` is w_ij. Pairs with gamma_ij = 0 stay zero."""

    w: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(np.array(a, dtype=complex, copy=True) for a in self.w))
        for a in self.w:
            a.setflags(write=False)

    @classmethod
    def zeros_like(cls, ch: ChannelSet) -> "BeamformerSet":
        return cls(tuple(np.zeros_like(a) for a in ch.h))

    def power(self) -> np.ndarray:
        """||w_ij||^2, shape (N_B+1, N_U)."""
        return np.array([np.sum(np.abs(a) ** 2, axis=0) for a in self.w])

    def power_used(self, mask) -> np.ndarray:
        return np.sum(self.power() * np.asarray(mask), axis=1)

    def with_columns(self, i: int, cols, values) -> "BeamformerSet":
        blocks = [a.copy() for a in self.w]
        blocks[i][:, cols] = values
        return BeamformerSet(tuple(blocks))


@dataclass(frozen=True)
class RateBreakdown:
    per_user_rate_bps: np.ndarray
    sum_rate_bps: float
    served_by: np.ndarray
    power_used_watts: np.ndarray
    power_violation: np.ndarray


def shannon_rate(sinr, bandwidth_hz: float):
    return bandwidth_hz * np.log2(1.0 + np.asarray(sinr))


def cross_gains(ch: ChannelSet, bf: BeamformerSet) -> np.ndarray:
    """g[b, j, u] = |h_bj^H w_bu|^2, shape (N_B+1, N_U, N_U)."""
    return np.stack([np.abs(h.conj().T @ w) ** 2 for h, w in zip(ch.h, bf.w)])


def interference(g: np.ndarray, mask) -> np.ndarray:
    """Per-user interference from the streams of all *other* users under ``mask``."""
    mask = np.asarray(mask, dtype=float)
    total = np.einsum("bju,bu->j", g, mask)
    own = np.einsum("bjj,bj->j", g, mask)
    return np.maximum(total - own, 0.0)


def _signal(g: np.ndarray) -> np.ndarray:
    return np.einsum("bjj->bj", g)


def sinr_matrix(ch: ChannelSet, mask, bf: BeamformerSet, g: Optional[np.ndarray] = None) -> np.ndarray:
    """SINR of every (i, j) pair given the set of active links ``mask``.

    Only active links interfere; the pair itself need not be active.
    """
    if g is None:
        g = cross_gains(ch, bf)
    return _signal(g) / (interference(g, mask) + ch.noise_power_watts)[None, :]


def sinr(ch: ChannelSet, a: Association, bf: BeamformerSet, i: int, j: int, gamma=None) -> float:
    gamma = np.ones_like(a.alpha) if gamma is None else gamma
    return float(sinr_matrix(ch, a.active(gamma), bf)[i, j])


def rf_rate_matrix(ch, mask, bf, g=None) -> np.ndarray:
    return shannon_rate(sinr_matrix(ch, mask, bf, g), ch.bandwidth_hz)


def rf_rate(ch: ChannelSet, a: Association, bf: BeamformerSet, i: int, j: int, gamma=None) -> float:
    return float(shannon_rate(sinr(ch, a, bf, i, j, gamma), ch.bandwidth_hz))


def haps_rate(ch: ChannelSet, a: Association, bf: BeamformerSet, j: int, gamma=None) -> float:
    return min(rf_rate(ch, a, bf, 0, j, gamma), ch.fso_rate_bps)


def full_interference_rate_matrix(ch: ChannelSet, bf: BeamformerSet, g=None) -> np.ndarray:
    """Rate with every stored beam of every other user counted as interference."""
    if g is None:
        g = cross_gains(ch, bf)
    return rf_rate_matrix(ch, np.ones(g.shape[:2]), bf, g)


def full_interference_rate(ch: ChannelSet, bf: BeamformerSet, i: int, j: int) -> float:
    return float(full_interference_rate_matrix(ch, bf)[i, j])


def interference_free_rate_matrix(ch: ChannelSet, bf: BeamformerSet, g=None) -> np.ndarray:
    if g is None:
        g = cross_gains(ch, bf)
    return shannon_rate(_signal(g) / ch.noise_power_watts, ch.bandwidth_hz)


def interference_free_rate(ch: ChannelSet, bf: BeamformerSet, i: int, j: int) -> float:
    return float(interference_free_rate_matrix(ch, bf)[i, j])


def link_rates(ch: ChannelSet, mask, bf: BeamformerSet, g=None) -> np.ndarray:
    """Delivered rate of every pair: RF rate, with the HAPS row capped by the backhaul."""
    r = rf_rate_matrix(ch, mask, bf, g)
    r[0] = np.minimum(r[0], ch.fso_rate_bps)
    return r


def network_sum_rate(ch: ChannelSet, a: Association, bf: BeamformerSet, gamma=None,
                     p_max=None, g=None) -> RateBreakdown:
    """Sum over users of the rate delivered by their serving transmitter.

    When ``p_max`` is given the per-transmitter power check is reported in
    ``power_violation``; otherwise no transmitter is flagged.
    """
    gamma = np.ones_like(a.alpha) if gamma is None else np.asarray(gamma)
    mask = a.active(gamma)
    r = link_rates(ch, mask, bf, g)
    per_user = np.sum(np.where(mask, r, 0.0), axis=0)
    used = bf.power_used(mask)
    if p_max is None:
        viol = np.zeros(len(used), dtype=bool)
    else:
        viol = used > np.asarray(p_max) * (1 + POWER_RTOL)
    return RateBreakdown(
        per_user_rate_bps=per_user,
        sum_rate_bps=float(per_user.sum()),
        served_by=Association(mask.astype(np.int8)).served_by,
        power_used_watts=used,
        power_violation=viol,
    )


def sum_rate(ch: ChannelSet, mask, bf: BeamformerSet, g=None) -> float:
    r = link_rates(ch, mask, bf, g)
    return float(np.sum(np.where(mask, r, 0.0)))
