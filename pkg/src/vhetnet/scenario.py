"""Network data model, the medium/large layouts and the scenario JSON format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np

HAPS = "HAPS"
GROUND_BS = "GroundBS"
ROLES = (HAPS, GROUND_BS)

# photon energy at 1550 nm, J
PHOTON_ENERGY_1550NM = 1.282e-19


class ScenarioError(ValueError):
    """Raised when a scenario document or object breaks the data model."""


@dataclass(frozen=True)
class Transmitter:
    position: tuple[float, float, float]
    n_antennas: int
    p_max_watts: float
    role: str = GROUND_BS

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3:
            raise ScenarioError("transmitter position must have 3 coordinates")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "n_antennas", int(self.n_antennas))
        object.__setattr__(self, "p_max_watts", float(self.p_max_watts))
        if self.role not in ROLES:
            raise ScenarioError(f"unknown transmitter role {self.role!r}")
        if self.n_antennas < 1:
            raise ScenarioError("n_antennas must be >= 1")
        if not self.p_max_watts > 0:
            raise ScenarioError("p_max_watts must be > 0")
        if self.role == HAPS and not self.position[2] > 0:
            raise ScenarioError("HAPS altitude must be > 0")
        if self.role == GROUND_BS and self.position[2] != 0:
            raise ScenarioError("ground BS must sit at z = 0")


@dataclass(frozen=True)
class FsoParams:
    """Satellite-to-HAPS optical link budget terms.

    ``area_ratio`` is the receiver-aperture to beam-footprint area ratio
    (the geometrical loss) and ``eta_b_photons_per_bit`` the receiver
    sensitivity.
    """

    p_t_watts: float = 1.0
    eta_t: float = 0.8
    eta_r: float = 0.8
    l_poi_db: float = 2.0
    l_atm_db: float = 1.0
    area_ratio: float = 4.0e-8
    e_p_joules: float = PHOTON_ENERGY_1550NM
    eta_b_photons_per_bit: float = 100.0

    def __post_init__(self):
        for name in ("eta_t", "eta_r"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ScenarioError(f"fso.{name} must lie in (0, 1]")
        if self.p_t_watts < 0:
            raise ScenarioError("fso.p_t_watts must be >= 0")
        if self.l_poi_db < 0 or self.l_atm_db < 0:
            raise ScenarioError("fso losses must be >= 0 dB")
        if not 0 < self.area_ratio <= 1:
            raise ScenarioError("fso.area_ratio must lie in (0, 1]")
        if not self.e_p_joules > 0 or not self.eta_b_photons_per_bit > 0:
            raise ScenarioError("fso.e_p_joules and fso.eta_b_photons_per_bit must be > 0")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Scenario:
    """One downlink network: HAPS at index 0 followed by the ground BSs."""

    transmitters: tuple[Transmitter, ...]
    users: np.ndarray
    satellite_position: tuple[float, float, float]
    bandwidth_hz: float = 10e6
    carrier_hz: float = 3e9
    noise_psd_dbm_hz: float = -174.0
    haps_user_cap: int = 20
    gamma: Optional[np.ndarray] = None
    fso: Optional[FsoParams] = field(default_factory=FsoParams)
    fso_rate_override: Optional[float] = None
    rician_kappa: float = 5.0
    shadowing_sigma_db: float = 5.0

    def __post_init__(self):
        txs = tuple(self.transmitters)
        object.__setattr__(self, "transmitters", txs)
        if not txs or txs[0].role != HAPS:
            raise ScenarioError("transmitter 0 must be the HAPS")
        if any(t.role == HAPS for t in txs[1:]):
            raise ScenarioError("exactly one HAPS is supported")
        users = np.asarray(self.users, dtype=float)
        if users.ndim != 2 or users.shape[1] != 3 or users.shape[0] < 1:
            raise ScenarioError("users must be a non-empty list of 3-D positions")
        object.__setattr__(self, "users", _frozen(users))
        object.__setattr__(self, "satellite_position", tuple(float(v) for v in self.satellite_position))
        shape = (len(txs), users.shape[0])
        if self.gamma is None:
            gamma = np.ones(shape, dtype=np.int8)
        else:
            gamma = np.asarray(self.gamma)
            if gamma.shape != shape:
                raise ScenarioError(f"gamma must have shape {shape}, got {gamma.shape}")
            if not np.isin(gamma, (0, 1)).all():
                raise ScenarioError("gamma entries must be 0 or 1")
            gamma = gamma.astype(np.int8)
        object.__setattr__(self, "gamma", _frozen(gamma))
        if not self.bandwidth_hz > 0:
            raise ScenarioError("bandwidth_hz must be > 0")
        if not self.carrier_hz > 0:
            raise ScenarioError("carrier_hz must be > 0")
        if int(self.haps_user_cap) != self.haps_user_cap or self.haps_user_cap < 0:
            raise ScenarioError("haps user_cap must be a nonnegative integer")
        object.__setattr__(self, "haps_user_cap", int(self.haps_user_cap))
        if self.rician_kappa < 0:
            raise ScenarioError("rician_kappa must be >= 0")
        if self.shadowing_sigma_db < 0:
            raise ScenarioError("shadowing_sigma_db must be >= 0")
        if self.fso is None and self.fso_rate_override is None:
            raise ScenarioError("fso needs either link parameters or rate_override_bps")
        if self.fso_rate_override is not None and self.fso_rate_override < 0:
            raise ScenarioError("fso rate_override_bps must be >= 0")

    @property
    def n_transmitters(self) -> int:
        return len(self.transmitters)

    @property
    def n_users(self) -> int:
        return self.users.shape[0]

    @property
    def tx_positions(self) -> np.ndarray:
        return np.array([t.position for t in self.transmitters])

    @property
    def p_max(self) -> np.ndarray:
        return np.array([t.p_max_watts for t in self.transmitters])

    @property
    def n_antennas(self) -> np.ndarray:
        return np.array([t.n_antennas for t in self.transmitters])

    def distances(self) -> np.ndarray:
        """Transmitter-to-user distance matrix, shape (N_B+1, N_U), meters."""
        diff = self.tx_positions[:, None, :] - self.users[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.transmitters == other.transmitters
            and np.array_equal(self.users, other.users)
            and self.satellite_position == other.satellite_position
            and self.bandwidth_hz == other.bandwidth_hz
            and self.carrier_hz == other.carrier_hz
            and self.noise_psd_dbm_hz == other.noise_psd_dbm_hz
            and self.haps_user_cap == other.haps_user_cap
            and np.array_equal(self.gamma, other.gamma)
            and self.fso == other.fso
            and self.fso_rate_override == other.fso_rate_override
            and self.rician_kappa == other.rician_kappa
            and self.shadowing_sigma_db == other.shadowing_sigma_db
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

KM = 1000.0

OVERRIDE_KEYS = (
    "haps_antennas",
    "haps_power_w",
    "haps_power_dbw",
    "haps_user_cap",
    "haps_altitude_m",
    "bs_antennas",
    "fso_rate_bps",
    "shadowing_sigma_db",
    "rician_kappa",
    "bandwidth_hz",
    "carrier_hz",
    "noise_psd_dbm_hz",
)


def dbw_to_watts(dbw: float) -> float:
    return 10.0 ** (dbw / 10.0)


def split_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Floor on every share except the last, which takes the remainder."""
    counts = [math.floor(n * f + 1e-9) for f in fractions[:-1]]
    counts.append(n - sum(counts))
    return counts


def _uniform_box(rng, n, x0, x1, y0, y1):
    xy = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    return np.column_stack([xy, np.zeros(n)])


def _uniform_outside(rng, n, side, holes):
    """Uniform points in [0, side]^2 minus the axis-aligned ``holes``."""
    out = np.empty((0, 3))
    while len(out) < n:
        cand = _uniform_box(rng, 2 * (n - len(out)) + 8, 0.0, side, 0.0, side)
        keep = np.ones(len(cand), dtype=bool)
        for x0, x1, y0, y1 in holes:
            inside = (cand[:, 0] >= x0) & (cand[:, 0] <= x1) & (cand[:, 1] >= y0) & (cand[:, 1] <= y1)
            keep &= ~inside
        out = np.vstack([out, cand[keep]])
    return out[:n]


def _check_overrides(overrides):
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(OVERRIDE_KEYS)
    if unknown:
        raise ScenarioError(f"unknown override(s): {', '.join(sorted(unknown))}")
    if "haps_power_w" in overrides and "haps_power_dbw" in overrides:
        raise ScenarioError("give haps_power_w or haps_power_dbw, not both")
    return overrides


def _assemble(
    side: float,
    bs_xy: np.ndarray,
    bs_power: Sequence[float],
    users: np.ndarray,
    haps_antennas: int,
    haps_power: float,
    overrides: Mapping[str, Any],
) -> Scenario:
    o = overrides
    n_haps = int(o.get("haps_antennas", haps_antennas))
    if "haps_power_dbw" in o:
        p_haps = dbw_to_watts(float(o["haps_power_dbw"]))
    else:
        p_haps = float(o.get("haps_power_w", haps_power))
    centre = side / 2.0
    haps = Transmitter(
        (centre, centre, float(o.get("haps_altitude_m", 18.0 * KM))), n_haps, p_haps, HAPS
    )
    n_bs_ant = int(o.get("bs_antennas", 1))
    bss = [
        Transmitter((x, y, 0.0), n_bs_ant, p, GROUND_BS)
        for (x, y, _), p in zip(bs_xy, bs_power)
    ]
    return Scenario(
        transmitters=(haps, *bss),
        users=users,
        satellite_position=(centre, centre, 36000.0 * KM),
        bandwidth_hz=float(o.get("bandwidth_hz", 10e6)),
        carrier_hz=float(o.get("carrier_hz", 3e9)),
        noise_psd_dbm_hz=float(o.get("noise_psd_dbm_hz", -174.0)),
        haps_user_cap=int(o.get("haps_user_cap", n_haps)),
        fso=FsoParams(),
        fso_rate_override=(float(o["fso_rate_bps"]) if "fso_rate_bps" in o else None),
        rician_kappa=float(o.get("rician_kappa", 5.0)),
        shadowing_sigma_db=float(o.get("shadowing_sigma_db", 5.0)),
    )


# user share of each subarea, in generation order
SUBAREA_SHARES = {
    "medium": (("urban", 0.6), ("outer", 0.4)),
    "large": (("urban", 0.6), ("suburban", 0.3), ("rural", 0.1)),
}


def subarea_counts(layout: str, n_users: int) -> dict[str, int]:
    names, shares = zip(*SUBAREA_SHARES[layout])
    return dict(zip(names, split_counts(n_users, shares)))


def generate_medium_scenario(seed: int, n_users: int, overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    """5 km x 5 km layout: 12 urban BSs in the [0, 1] km corner.

    60 % of the users fall in the corner square, the rest anywhere else in
    the footprint.
    """
    if n_users < 1:
        raise ScenarioError("n_users must be >= 1")
    overrides = _check_overrides(overrides)
    rng = np.random.default_rng(seed)
    side = 5 * KM
    bs = _uniform_box(rng, 12, 0, KM, 0, KM)
    n1, n2 = subarea_counts("medium", n_users).values()
    users = np.vstack([
        _uniform_box(rng, n1, 0, KM, 0, KM),
        _uniform_outside(rng, n2, side, [(0, KM, 0, KM)]),
    ])
    return _assemble(side, bs, [1.0] * 12, users, 20, 100.0, overrides)


def generate_large_scenario(seed: int, n_users: int, overrides: Optional[Mapping[str, Any]] = None) -> Scenario:
    """30 km x 30 km layout with urban, suburban and rural subareas.

    Urban: 60 BSs (1 W) and 60 % of users in [0, 5] km^2. Suburban: 30 BSs
    (2 W) and 30 % of users in [25, 30] km^2. Rural: 8 BSs (5 W) and the
    remaining users elsewhere.
    """
    if n_users < 1:
        raise ScenarioError("n_users must be >= 1")
    overrides = _check_overrides(overrides)
    rng = np.random.default_rng(seed)
    side = 30 * KM
    holes = [(0, 5 * KM, 0, 5 * KM), (25 * KM, side, 25 * KM, side)]
    bs = np.vstack([
        _uniform_box(rng, 60, 0, 5 * KM, 0, 5 * KM),
        _uniform_box(rng, 30, 25 * KM, side, 25 * KM, side),
        _uniform_outside(rng, 8, side, holes),
    ])
    power = [1.0] * 60 + [2.0] * 30 + [5.0] * 8
    n1, n2, n3 = subarea_counts("large", n_users).values()
    users = np.vstack([
        _uniform_box(rng, n1, 0, 5 * KM, 0, 5 * KM),
        _uniform_box(rng, n2, 25 * KM, side, 25 * KM, side),
        _uniform_outside(rng, n3, side, holes),
    ])
    return _assemble(side, bs, power, users, 40, 200.0, overrides)


LAYOUTS = {"medium": generate_medium_scenario, "large": generate_large_scenario}


def generate_scenario(layout: str, seed: int, n_users: int, overrides=None) -> Scenario:
    try:
        gen = LAYOUTS[layout]
    except KeyError:
        raise ScenarioError(f"unknown layout {layout!r}") from None
    return gen(seed, n_users, overrides)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

_FSO_FIELDS = (
    "p_t_watts", "eta_t", "eta_r", "l_poi_db", "l_atm_db",
    "area_ratio", "e_p_joules", "eta_b_photons_per_bit",
)


def scenario_to_dict(s: Scenario) -> dict:
    fso: dict[str, Any] = {}
    if s.fso is not None:
        fso.update({k: getattr(s.fso, k) for k in _FSO_FIELDS})
    if s.fso_rate_override is not None:
        fso["rate_override_bps"] = s.fso_rate_override
    return {
        "transmitters": [
            {
                "position": list(t.position),
                "n_antennas": t.n_antennas,
                "p_max_watts": t.p_max_watts,
                "role": t.role,
            }
            for t in s.transmitters
        ],
        "users": s.users.tolist(),
        "satellite": list(s.satellite_position),
        "radio": {
            "bandwidth_hz": s.bandwidth_hz,
            "carrier_hz": s.carrier_hz,
            "noise_psd_dbm_hz": s.noise_psd_dbm_hz,
        },
        "haps": {"user_cap": s.haps_user_cap, "rician_kappa": s.rician_kappa},
        "fso": fso,
        "gamma": s.gamma.astype(int).tolist(),
        "shadowing_sigma_db": s.shadowing_sigma_db,
    }


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)


def _require(doc: Mapping, key: str, where: str = ""):
    if not isinstance(doc, Mapping):
        raise ScenarioError(f"{where or 'document'} must be an object")
    if key not in doc:
        raise ScenarioError(f"missing required field {where + '.' if where else ''}{key}")
    return doc[key]


def _number(doc, key, where):
    v = _require(doc, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"field {where + '.' if where else ''}{key} must be a number")
    return float(v)


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    txs = []
    for k, t in enumerate(_require(doc, "transmitters")):
        where = f"transmitters[{k}]"
        txs.append(Transmitter(
            position=_require(t, "position", where),
            n_antennas=_require(t, "n_antennas", where),
            p_max_watts=_number(t, "p_max_watts", where),
            role=_require(t, "role", where),
        ))
    radio = _require(doc, "radio")
    haps = _require(doc, "haps")
    fso_doc = _require(doc, "fso")
    if not isinstance(fso_doc, Mapping):
        raise ScenarioError("fso must be an object")
    params = None
    if any(k in fso_doc for k in _FSO_FIELDS):
        params = FsoParams(**{k: _number(fso_doc, k, "fso") for k in _FSO_FIELDS})
    override = fso_doc.get("rate_override_bps")
    if override is not None:
        override = _number(fso_doc, "rate_override_bps", "fso")
    if params is None and override is None:
        raise ScenarioError("missing required field fso.rate_override_bps (or full fso parameters)")
    user_cap = _require(haps, "user_cap", "haps")
    if isinstance(user_cap, bool) or not isinstance(user_cap, int):
        raise ScenarioError("field haps.user_cap must be an integer")
    return Scenario(
        transmitters=tuple(txs),
        users=np.asarray(_require(doc, "users"), dtype=float),
        satellite_position=_require(doc, "satellite"),
        bandwidth_hz=_number(radio, "bandwidth_hz", "radio"),
        carrier_hz=_number(radio, "carrier_hz", "radio"),
        noise_psd_dbm_hz=_number(radio, "noise_psd_dbm_hz", "radio"),
        haps_user_cap=user_cap,
        gamma=(np.asarray(doc["gamma"]) if doc.get("gamma") is not None else None),
        fso=params,
        fso_rate_override=override,
        rician_kappa=_number(haps, "rician_kappa", "haps"),
        shadowing_sigma_db=_number(doc, "shadowing_sigma_db", ""),
    )


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_scenario(s))
        fh.write("\n")
