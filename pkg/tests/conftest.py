import numpy as np
import pytest

from vhetnet.channel import ChannelSet
from vhetnet.rates import Association, BeamformerSet
from vhetnet.scenario import HAPS, GROUND_BS, Scenario, Transmitter

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def synthetic_channels(rng, antennas, n_users, noise=1.0, bandwidth=1.0, fso=1e12, scale=1.0):
    """CN(0, scale) channel blocks; defaults give a unit-noise, unit-bandwidth model."""
    h = tuple(
        scale * (rng.standard_normal((n, n_users)) + 1j * rng.standard_normal((n, n_users))) / np.sqrt(2)
        for n in antennas
    )
    return ChannelSet(h, fso, noise, bandwidth)


def toy_scenario(bs_xy, users_xy, bs_antennas=1, bs_power=1.0, haps_antennas=2, haps_power=10.0,
                 haps_cap=None, **kw):
    """HAPS over the origin at 18 km plus ground BSs at the given points."""
    txs = [Transmitter((0.0, 0.0, 18e3), haps_antennas, haps_power, HAPS)]
    txs += [Transmitter((x, y, 0.0), bs_antennas, bs_power, GROUND_BS) for x, y in bs_xy]
    users = np.array([[x, y, 0.0] for x, y in users_xy])
    return Scenario(
        transmitters=tuple(txs),
        users=users,
        satellite_position=(0.0, 0.0, 36000e3),
        haps_user_cap=haps_antennas if haps_cap is None else haps_cap,
        **kw,
    )


def wmmse_instance(seed, n_bs=3, users_per_bs=2, antennas=2, power=10.0):
    """Ground BSs each serving their own users; the HAPS block exists but is idle.

    Returns (channels, association, random initial beams at full power, p_max).
    """
    rng = np.random.default_rng(seed)
    n_users = n_bs * users_per_bs
    ch = synthetic_channels(rng, [antennas] * (n_bs + 1), n_users)
    served = np.repeat(np.arange(1, n_bs + 1), users_per_bs)
    a = Association.from_served_by(served, n_bs + 1)
    p_max = np.full(n_bs + 1, power)
    blocks = []
    for i in range(n_bs + 1):
        w = (rng.standard_normal((antennas, n_users)) + 1j * rng.standard_normal((antennas, n_users))) * a.alpha[i]
        if i > 0:
            w *= np.sqrt(power / np.sum(np.abs(w) ** 2))
        blocks.append(w)
    return ch, a, BeamformerSet(tuple(blocks)), p_max


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
