"""FSO backhaul capacity and random RF channel vectors."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import FsoParams, Scenario

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Channel vectors for every (transmitter, user) pair.

    ``h[i]`` has shape ``(N_A^i, N_U)``; column ``j`` is the vector h_ij.
    """

    h: tuple[np.ndarray, ...]
    fso_rate_bps: float
    noise_power_watts: float
    bandwidth_hz: float

    def __post_init__(self):
        hs = []
        for a in self.h:
            a = np.array(a, dtype=complex, copy=True)
            if a.ndim != 2:
                raise ValueError("each channel block must be 2-D (antennas, users)")
            a.setflags(write=False)
            hs.append(a)
        if len({a.shape[1] for a in hs}) != 1:
            raise ValueError("all channel blocks must cover the same users")
        object.__setattr__(self, "h", tuple(hs))
        if self.fso_rate_bps < 0:
            raise ValueError("fso_rate_bps must be >= 0")
        if not self.noise_power_watts > 0:
            raise ValueError("noise_power_watts must be > 0")

    @property
    def n_transmitters(self) -> int:
        return len(self.h)

    @property
    def n_users(self) -> int:
        return self.h[0].shape[1]

    def gains(self) -> np.ndarray:
        """c_ij = ||h_ij||^2, shape (N_B+1, N_U)."""
        return np.array([np.sum(np.abs(a) ** 2, axis=0) for a in self.h])

    def with_fso_rate(self, rate: float) -> "ChannelSet":
        return ChannelSet(self.h, float(rate), self.noise_power_watts, self.bandwidth_hz)


def fso_backhaul_rate(p: FsoParams) -> float:
    """Photon-counting capacity of the satellite-to-HAPS optical link, bit/s."""
    received = (
        p.p_t_watts * p.eta_t * p.eta_r
        * 10.0 ** (-p.l_poi_db / 10.0)
        * 10.0 ** (-p.l_atm_db / 10.0)
        * p.area_ratio
    )
    return received / (p.e_p_joules * p.eta_b_photons_per_bit)


def noise_power(bandwidth_hz: float, noise_psd_dbm_hz: float) -> float:
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth must be > 0")
    return 10.0 ** ((noise_psd_dbm_hz - 30.0) / 10.0) * bandwidth_hz


def scenario_fso_rate(s: Scenario) -> float:
    if s.fso_rate_override is not None:
        return float(s.fso_rate_override)
    return fso_backhaul_rate(s.fso)


def rayleigh_gain(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rician_gain(rng: np.random.Generator, shape, kappa: float, los_phase=None) -> np.ndarray:
    """Rician small-scale gain with unit second moment.

    ``los_phase`` broadcasts against ``shape``; when omitted a uniform phase
    is drawn per sample.
    """
    if los_phase is None:
        los_phase = rng.uniform(0.0, 2 * np.pi, shape)
    los = np.sqrt(kappa / (kappa + 1.0)) * np.exp(1j * np.asarray(los_phase))
    return los + np.sqrt(1.0 / (kappa + 1.0)) * rayleigh_gain(rng, shape)


def shadowing_db(rng: np.random.Generator, shape, sigma_db: float) -> np.ndarray:
    return rng.normal(0.0, sigma_db, shape)


def free_space_amplitude(distance_m, carrier_hz: float):
    return SPEED_OF_LIGHT / (4 * np.pi * np.asarray(distance_m) * carrier_hz)


def draw_channels(s: Scenario, seed: int) -> ChannelSet:
    """Draw one channel realisation for ``s``.

    Antennas of one transmitter are co-located, so every antenna of the pair
    shares the distance and (for ground BSs) the log-normal shadowing draw.
    The HAPS link carries no shadowing and a Rician gain whose LOS phase is
    drawn once per user.
    """
    rng = np.random.default_rng(seed)
    d = s.distances()
    amp = free_space_amplitude(d, s.carrier_hz)
    hs = []
    theta = rng.uniform(0.0, 2 * np.pi, s.n_users)
    for i, tx in enumerate(s.transmitters):
        shape = (tx.n_antennas, s.n_users)
        if i == 0:
            fading = rician_gain(rng, shape, s.rician_kappa, theta[None, :])
            hs.append(amp[0][None, :] * fading)
        else:
            a = 10.0 ** (shadowing_db(rng, s.n_users, s.shadowing_sigma_db) / 20.0)
            fading = rayleigh_gain(rng, shape)
            hs.append((amp[i] * a)[None, :] * fading)
    return ChannelSet(
        h=tuple(hs),
        fso_rate_bps=scenario_fso_rate(s),
        noise_power_watts=noise_power(s.bandwidth_hz, s.noise_psd_dbm_hz),
        bandwidth_hz=s.bandwidth_hz,
    )


def write_channel_csv(ch: ChannelSet, path) -> None:
    """Dump every coefficient as rows (i, j, n, re, im)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "n", "re", "im"])
        for i, a in enumerate(ch.h):
            for j in range(a.shape[1]):
                for n in range(a.shape[0]):
                    v = a[n, j]
                    w.writerow([i, j, n, repr(float(v.real)), repr(float(v.imag))])


def read_channel_csv(path, n_antennas: Sequence[int], fso_rate_bps: float,
                     noise_power_watts: float, bandwidth_hz: float) -> ChannelSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n_users = 1 + max(int(r["j"]) for r in rows)
    hs = [np.zeros((n, n_users), dtype=complex) for n in n_antennas]
    for r in rows:
        hs[int(r["i"])][int(r["n"]), int(r["j"])] = complex(float(r["re"]), float(r["im"]))
    return ChannelSet(tuple(hs), fso_rate_bps, noise_power_watts, bandwidth_hz)
