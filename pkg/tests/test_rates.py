import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import synthetic_channels
from oracles import rates_loops, sinr_loops
from vhetnet.channel import ChannelSet
from vhetnet.rates import (
    Association,
    AssociationError,
    BeamformerSet,
    full_interference_rate,
    full_interference_rate_matrix,
    haps_rate,
    interference_free_rate,
    interference_free_rate_matrix,
    network_sum_rate,
    rf_rate,
    rf_rate_matrix,
    shannon_rate,
    sinr,
    sum_rate,
)

# two single-antenna transmitters (HAPS = 0, BS = 1), two users
H2 = (np.array([[1.0 + 1.0j, 0.5 + 0.0j]]), np.array([[0.2 - 0.1j, 2.0 + 0.0j]]))
W2 = (np.array([[0.8 + 0.0j, 0.3j]]), np.array([[0.1 + 0.0j, 1.0 - 1.0j]]))


def two_by_two(noise=0.5, bw=1e6, fso=1e9):
    return ChannelSet(H2, fso, noise, bw), BeamformerSet(W2)


def test_two_by_two_hand_value():
    ch, bf = two_by_two()
    a = Association.from_served_by([0, 1], 2)
    # user 0: signal |(1-1j)*0.8|^2 = 1.28, interference |(0.2+0.1j)*(1-1j)|^2 = 0.1
    assert sinr(ch, a, bf, 0, 0) == pytest.approx(1.28 / (0.1 + 0.5))
    # user 1: signal |2*(1-1j)|^2 = 8, interference from user 0's stream |0.5*0.8|^2 = 0.16
    assert sinr(ch, a, bf, 1, 1) == pytest.approx(8.0 / (0.16 + 0.5))
    total = 1e6 * (math.log2(1 + 1.28 / 0.6) + math.log2(1 + 8 / 0.66))
    assert network_sum_rate(ch, a, bf).sum_rate_bps == pytest.approx(total)


def test_full_interference_two_by_two():
    ch, bf = two_by_two()
    # pair (1, 0): signal |(0.2+0.1j)*0.1|^2 = 0.0005; both streams meant for
    # user 1 interfere: |(0.2+0.1j)*(1-1j)|^2 + |(1-1j)*0.3j|^2 = 0.1 + 0.18
    expected = 1e6 * math.log2(1 + 0.0005 / (0.1 + 0.18 + 0.5))
    assert full_interference_rate(ch, bf, 1, 0) == pytest.approx(expected)


def test_full_interference_equals_true_rate_when_all_active():
    ch, bf = two_by_two()
    all_on = np.ones((2, 2), dtype=bool)
    np.testing.assert_allclose(full_interference_rate_matrix(ch, bf), rf_rate_matrix(ch, all_on, bf))


def test_interference_free_two_by_two():
    ch, bf = two_by_two()
    assert interference_free_rate(ch, bf, 1, 1) == pytest.approx(1e6 * math.log2(1 + 8 / 0.5))


def test_matched_filter_single_user():
    h = np.array([[1.0 + 2.0j], [0.5 - 1.0j], [3.0 + 0.0j]])
    p = 2.0
    w = np.sqrt(p) * h / np.linalg.norm(h)
    ch = ChannelSet((np.zeros((1, 1)), h), 0.0, 0.1, 1.0)
    bf = BeamformerSet((np.zeros((1, 1)), w))
    a = Association.from_served_by([1], 2)
    assert sinr(ch, a, bf, 1, 0) == pytest.approx(p * np.linalg.norm(h) ** 2 / 0.1)


def test_zero_beam_zero_sinr():
    ch, bf = two_by_two()
    bf = bf.with_columns(1, [1], np.zeros((1, 1)))
    a = Association.from_served_by([0, 1], 2)
    assert sinr(ch, a, bf, 1, 1) == 0.0
    assert full_interference_rate_matrix(ch, BeamformerSet.zeros_like(ch)).max() == 0.0


@pytest.mark.parametrize("s, expected", [(0.0, 0.0), (1.0, 1e7), (3.0, 2e7)])
def test_shannon(s, expected):
    assert shannon_rate(s, 1e7) == pytest.approx(expected)


def test_haps_rate_caps():
    ch, bf = two_by_two()
    a = Association.from_served_by([0, 1], 2)
    rf = rf_rate(ch, a, bf, 0, 0)
    assert haps_rate(ch.with_fso_rate(0.0), a, bf, 0) == 0.0
    assert haps_rate(ChannelSet(H2, 1e12, 0.5, 1e6), a, bf, 0) == pytest.approx(rf)
    assert haps_rate(ChannelSet(H2, rf / 2, 0.5, 1e6), a, bf, 0) == pytest.approx(rf / 2)


def test_empty_association():
    ch, bf = two_by_two()
    r = network_sum_rate(ch, Association.empty(2, 2), bf)
    assert r.sum_rate_bps == 0.0
    assert (r.served_by == -1).all()


def test_single_link_equals_rf_rate():
    ch, bf = two_by_two()
    a = Association.from_served_by([-1, 1], 2)
    assert network_sum_rate(ch, a, bf).sum_rate_bps == pytest.approx(rf_rate(ch, a, bf, 1, 1))


def test_inactive_link_does_not_interfere():
    ch, bf = two_by_two()
    only_bs = Association.from_served_by([-1, 1], 2)
    # with user 0 unserved its stream is silent, so user 1 sees only noise
    assert sinr(ch, only_bs, bf, 1, 1) == pytest.approx(8.0 / 0.5)


def test_gamma_masks_links():
    ch, bf = two_by_two()
    a = Association.from_served_by([0, 1], 2)
    gamma = np.array([[0, 1], [1, 1]])
    r = network_sum_rate(ch, a, bf, gamma)
    assert r.per_user_rate_bps[0] == 0.0 and r.served_by[0] == -1


def test_power_violation_flag():
    ch, bf = two_by_two()
    a = Association.from_served_by([0, 1], 2)
    used = bf.power_used(a.alpha)
    r = network_sum_rate(ch, a, bf, p_max=[used[0], used[1] / 2])
    assert list(r.power_violation) == [False, True]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n_users=st.integers(1, 5))
def test_matches_scalar_oracle(seed, n_users):
    rng = np.random.default_rng(seed)
    antennas = [2, 1, 3]
    ch = synthetic_channels(rng, antennas, n_users, noise=0.3, bandwidth=2e6, fso=3e6)
    bf = BeamformerSet(tuple(rng.standard_normal((n, n_users)) + 1j * rng.standard_normal((n, n_users))
                             for n in antennas))
    served = rng.integers(-1, 3, n_users)
    a = Association.from_served_by(served, 3)
    h = [x.tolist() for x in ch.h]
    w = [x.tolist() for x in bf.w]
    expected = rates_loops(h, w, list(served), 0.3, 2e6, 3e6)
    got = network_sum_rate(ch, a, bf)
    np.testing.assert_allclose(got.per_user_rate_bps, expected, rtol=1e-10, atol=1e-6)
    assert got.sum_rate_bps == pytest.approx(sum(expected), rel=1e-10, abs=1e-6)
    assert sum_rate(ch, a.alpha > 0, bf) == pytest.approx(got.sum_rate_bps, rel=1e-12, abs=1e-9)
    s = sinr_loops(h, w, list(served), 0.3)
    for j, i in enumerate(served):
        if i >= 0:
            assert sinr(ch, a, bf, i, j) == pytest.approx(s[j], rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_rate_ordering(seed):
    """interference-free >= true >= full-interference for every pair."""
    rng = np.random.default_rng(seed)
    ch = synthetic_channels(rng, [2, 2], 4)
    bf = BeamformerSet(tuple(rng.standard_normal((2, 4)) + 0j for _ in range(2)))
    a = Association.from_served_by(rng.integers(-1, 2, 4), 2)
    free = interference_free_rate_matrix(ch, bf)
    true = rf_rate_matrix(ch, a.alpha > 0, bf)
    full = full_interference_rate_matrix(ch, bf)
    assert (free >= true - 1e-9).all() and (true >= full - 1e-9).all()


def test_association_validation():
    with pytest.raises(AssociationError):
        Association(np.array([[2, 0]]))
    a = Association(np.array([[1, 1], [1, 0]]))
    with pytest.raises(AssociationError, match="more than one"):
        a.validate(np.ones((2, 2)), 2)
    with pytest.raises(AssociationError, match="payload"):
        Association(np.array([[1, 1], [0, 0]])).validate(np.ones((2, 2)), 1)
    with pytest.raises(AssociationError, match="unavailable"):
        Association(np.array([[1, 0], [0, 0]])).validate(np.array([[0, 1], [1, 1]]), 2)


def test_served_by_round_trip():
    served = np.array([2, -1, 0, 1])
    assert np.array_equal(Association.from_served_by(served, 3).served_by, served)
