import numpy as np
import pytest

from conftest import toy_scenario
from vhetnet.channel import draw_channels
from vhetnet.orchestrator import (
    METHODS,
    SolverParams,
    algorithm3_solve,
    candidate_beams,
    compute_delta,
    init_beamformers,
    report_to_dict,
)
from vhetnet.rates import Association, sum_rate
from vhetnet.scenario import generate_medium_scenario


def battery_case(seed, n_users=6, **kw):
    rng = np.random.default_rng(seed)
    bs = [tuple(p) for p in rng.uniform(0, 1000, (2, 2))]
    users = [tuple(p) for p in rng.uniform(0, 1000, (n_users, 2))]
    s = toy_scenario(bs, users, bs_antennas=2, bs_power=1.0, haps_antennas=2, haps_power=20.0, **kw)
    return s, draw_channels(s, seed + 500)


@pytest.mark.parametrize("served, expected", [
    ([-1] * 4, 0.0),
    ([0] * 4, 1.0),
    ([0, 1, 0, 1, 1, 1, 2, 2], 0.25),
])
def test_delta(served, expected):
    s = toy_scenario([(0.0, 0.0), (10.0, 0.0)], [(1.0, 1.0)] * len(served), haps_cap=len(served))
    assert compute_delta(Association.from_served_by(served, 3), s) == pytest.approx(expected)


def test_init_beams():
    s = generate_medium_scenario(3, 10, {"haps_antennas": 4})
    ch = draw_channels(s, 1)
    bf = init_beamformers(ch, s)
    # HAPS: 10 candidates but room for 4 streams at once
    norms = np.linalg.norm(bf.w[0], axis=0)
    np.testing.assert_allclose(norms ** 2, s.p_max[0] / 4)
    for i in range(s.n_transmitters):
        h, w = ch.h[i], bf.w[i]
        inner = np.abs(np.sum(h.conj() * w, axis=0))
        np.testing.assert_allclose(inner, np.linalg.norm(h, axis=0) * np.linalg.norm(w, axis=0), rtol=1e-12)
    # a single-antenna BS puts its whole budget on any one link
    np.testing.assert_allclose(np.linalg.norm(bf.w[1], axis=0) ** 2, s.p_max[1])


def test_init_beams_full_budget_when_few_candidates():
    s = toy_scenario([(0.0, 0.0)], [(10.0, 0.0), (20.0, 0.0)], bs_antennas=4, bs_power=3.0)
    bf = init_beamformers(draw_channels(s, 0), s)
    assert bf.power_used(np.ones((2, 2)))[1] == pytest.approx(3.0)


def test_unavailable_pairs_get_no_beam():
    s = toy_scenario([(0.0, 0.0)], [(10.0, 0.0), (20.0, 0.0)])
    g = s.gamma.copy()
    g[1, 0] = 0
    s = s.replace(gamma=g)
    bf = init_beamformers(draw_channels(s, 0), s)
    assert not bf.w[1][:, 0].any()


def test_candidate_beams_fall_back_for_silent_links():
    s, ch = battery_case(0)
    init = init_beamformers(ch, s)
    bf = init.with_columns(1, [0, 1], np.zeros((2, 2)))
    bf = bf.with_columns(2, [2], 5 * init.w[2][:, [2]])
    mask = np.zeros(s.gamma.shape, dtype=bool)
    mask[1, 0] = mask[2, 2] = True
    cand = candidate_beams(bf, init, mask)
    np.testing.assert_array_equal(cand.w[1][:, 0], init.w[1][:, 0])
    np.testing.assert_array_equal(cand.w[2][:, 2], 5 * init.w[2][:, 2])
    np.testing.assert_array_equal(cand.w[1][:, 1], init.w[1][:, 1])


def test_single_link_closed_form():
    s = toy_scenario([(150.0, 0.0)], [(0.0, 0.0)], bs_antennas=3, bs_power=2.0, haps_cap=0)
    ch = draw_channels(s, 4)
    rep = algorithm3_solve(s, ch, SolverParams())
    expected = s.bandwidth_hz * np.log2(1 + 2.0 * np.linalg.norm(ch.h[1]) ** 2 / ch.noise_power_watts)
    assert rep.sum_rate_bps == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_report_is_consistent(method):
    s, ch = battery_case(1)
    rep = algorithm3_solve(s, ch, SolverParams(method=method))
    assert rep.sum_rate_bps == pytest.approx(max(rep.trace), rel=1e-12)
    assert 0.0 <= rep.delta <= 1.0
    assert 1 <= rep.outer_iterations <= 10
    rep.association.validate(s.gamma, s.haps_user_cap)
    assert not rep.rates.power_violation.any()
    if method.endswith("only"):
        assert rep.outer_iterations == 1


def test_wmmse_never_hurts_on_battery():
    for seed in range(15):
        s, ch = battery_case(seed)
        with_bf = algorithm3_solve(s, ch, SolverParams("IG_WMMSE")).sum_rate_bps
        without = algorithm3_solve(s, ch, SolverParams("IG_only")).sum_rate_bps
        assert with_bf >= without * (1 - 1e-12)


def test_zero_backhaul_empties_haps():
    s, ch = battery_case(2, fso_rate_override=0.0)
    assert algorithm3_solve(s, ch, SolverParams()).delta == 0.0


def test_respects_outer_cap():
    s, ch = battery_case(3)
    assert algorithm3_solve(s, ch, SolverParams(max_outer=1)).outer_iterations == 1


def test_report_dict():
    s, ch = battery_case(4)
    rep = algorithm3_solve(s, ch, SolverParams())
    d = report_to_dict(rep)
    assert "wall_time_s" not in d and "wall_time_s" in report_to_dict(rep, include_time=True)
    assert d["sum_rate_bps"] == pytest.approx(sum(d["per_user_rate_bps"]))
    assert d["best_so_far_bps"][-1] == pytest.approx(d["sum_rate_bps"])
    assert sum_rate(ch, rep.association.active(s.gamma), rep.beamformers) == pytest.approx(d["sum_rate_bps"])


@pytest.mark.parametrize("kw", [dict(method="XX"), dict(eps_outer=0.0), dict(max_beam=0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        SolverParams(**kw)
