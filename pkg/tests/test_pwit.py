import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpplab.calculus import derive_params, gw_survival, mstar
from fpplab.errors import ContractError, ResourceError
from fpplab.pwit import (Explorer, Forest, M_quantile, R_sum, R_sum_inv, bp_explore, bp_population,
                         freeze, ip_run, ip_sample_M, sample_M_oracle, thin)
from fpplab.rng import stream
from fpplab.stats import ks_test, target_cdfs
from fpplab.weights import WeightFamily, WeightScale

EP8 = WeightFamily.exp_power(8.0)


def _hand_forest(rows):
    """rows: (parent, TB, mark)"""
    f = Forest()
    for parent, tb, mark in rows:
        f.parent.append(parent)
        f.TB.append(tb)
        f.mark.append(mark)
    return f


def test_single_vertex_stop():
    f = bp_explore(EP8, 100, stream(0, 0, "t"), stop_count=1)
    assert len(f) == 1 and f.T[0] == 0.0 and f.parent[0] == -1


def test_explore_needs_a_bound():
    with pytest.raises(ContractError):
        bp_explore(EP8, 100, stream(0, 0, "t"))


def test_birth_order_and_time_recursion():
    f = bp_explore(EP8, 100, stream(1, 0, "t"), sides=2, stop_count=3000, n_marks=100)
    ws = WeightScale(EP8, 100)
    assert all(b >= a for a, b in zip(f.TB, f.TB[1:]))
    for v in range(2, len(f)):
        p = f.parent[v]
        assert f.T[v] == pytest.approx(f.T[p] + ws.phi1(f.X[v]), rel=1e-12)


def test_node_cap_is_a_resource_error():
    with pytest.raises(ResourceError):
        bp_explore(EP8, 100, stream(1, 0, "t"), stop_count=10_000, node_cap=50)


def test_child_gaps_are_exponential():
    ex = Explorer(EP8, 100, stream(2, 0, "gaps"), sides=1, freeze=False, keep_children=True)
    gaps = []
    for v in range(50_000):
        x1, _ = ex.child(-v - 1, 1)
        x2, _ = ex.child(-v - 1, 2)
        gaps += [x1, x2 - x1]
    d, _ = ks_test(gaps, target_cdfs()["Exp1"])
    assert d < 0.01


def test_first_child_birth_law():
    ws = WeightScale(EP8, 100)
    xs = []
    for k in range(20_000):
        f = bp_explore(EP8, 100, stream(3, k, "first"), stop_count=2)
        xs.append(float(ws.phi_inv(f.T[1])))
    d, _ = ks_test(xs, target_cdfs()["Exp1"])
    assert d < 0.02


def test_population_near_exponential_growth():
    fam = WeightFamily.exp_power(16.0)
    lam = derive_params(fam, 1e6).lambda_norm
    pop = bp_population(fam, 1e6, 6.0 / lam, 10_000, stream(4, 0, "pop"))
    assert abs(pop.mean() / (16.0 * math.exp(6.0)) - 1) < 0.35


def test_hand_thinning():
    f = _hand_forest([(-1, 0.0, 1), (0, 1.0, 3), (0, 2.0, 3), (2, 3.0, 4)])
    assert thin(f) == [False, False, True, True]


def test_thinning_requires_birth_order():
    f = _hand_forest([(-1, 0.0, 1), (0, 2.0, 3), (0, 1.0, 4)])
    with pytest.raises(ContractError):
        thin(f)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), cut=st.floats(0.1, 1.0))
def test_thinning_rules_and_prefix_stability(seed, cut):
    f = bp_explore(EP8, 40, stream(seed, 0, "thin"), sides=2, stop_count=400, n_marks=40)
    flags = thin(f)
    assert flags == f.thinned
    assert flags[0] is False and flags[1] is False
    assert f.mark[0] == 1 and f.mark[1] == 2
    kept = [f.mark[v] for v in range(len(f)) if not flags[v]]
    assert len(kept) == len(set(kept))
    m = max(2, int(cut * len(f)))
    assert thin(f, range(m)) == flags[:m]


def test_ip_first_step_is_exponential():
    xs = [ip_run(stream(5, k, "ip"), steps=1).record_max for k in range(5000)]
    d, _ = ks_test(xs, target_cdfs()["Exp1"])
    assert d < 0.03


def test_ip_invades_cheapest_boundary():
    st_ = ip_run(stream(6, 0, "ip"), steps=3000, debug=True)
    xs = [x for _, _, x in st_.invaded]
    assert st_.record_max == max(xs)
    assert all(b >= a for a, b in zip(np.maximum.accumulate(xs), np.maximum.accumulate(xs)[1:]))


def test_ip_window_matches_record_sampler():
    rng_a = [ip_run(stream(7, k, "w"), window=200).record_max for k in range(400)]
    rng_b = ip_sample_M(stream(8, 0, "w"), 200, 400)
    from fpplab.stats import ks_2samp
    d, p = ks_2samp(rng_a, rng_b)
    assert p > 0.001


@pytest.mark.xfail(strict=True, reason="a finite window stops early on roughly 0.5% of runs")
def test_ip_window_sample_above_one():
    m = ip_sample_M(stream(9, 0, "ipM"), 10_000, 10_000)
    assert np.mean(m >= 1.0) >= 0.999


def test_oracle_inverse_examples():
    assert float(M_quantile(gw_survival(2.0))[0]) == pytest.approx(2.0, abs=1e-10)
    assert 1.0 < float(M_quantile(1e-9)[0]) < 1.0 + 1e-6
    m = np.maximum(sample_M_oracle(stream(10, 0, "a"), 50_000), sample_M_oracle(stream(10, 1, "b"), 50_000))
    assert np.mean(m <= 2.0) == pytest.approx(0.63491, abs=0.01)


@pytest.mark.parametrize("s", [8.0, 32.0])
def test_freezing_window(s):
    fam = WeightFamily.exp_power(s)
    for k in range(40):
        fs = freeze(fam, 1e6, stream(11, k, "fr"))
        for j in (0, 1):
            assert s <= fs.F_at_fr[j] <= s + 1
            assert fs.intensity(j, fs.T_fr[j]) == pytest.approx(fs.F_at_fr[j], rel=1e-12)
        assert fs.T_unfr == max(fs.T_fr)


def test_onoff_clock_properties():
    fs = freeze(EP8, 1e6, stream(12, 0, "fr"))
    t0 = min(fs.T_fr)
    ts = np.linspace(t0, fs.T_unfr + 5, 400)
    rs = R_sum(fs.T_fr, fs.T_unfr, ts)
    assert np.all(np.diff(rs) > 0)
    for j in (0, 1):
        for u in (0.0, 0.5, 3.0):
            assert fs.R(j, fs.T_unfr + u) - fs.R(j, fs.T_unfr) == pytest.approx(u, abs=1e-12)
    for w in (0.5 * rs[0], rs[100], rs[-1]):
        assert R_sum(fs.T_fr, fs.T_unfr, R_sum_inv(fs.T_fr, fs.T_unfr, w)) == pytest.approx(w, rel=1e-12)


def test_residual_intensity_grid_matches_quadrature():
    ms = mstar(WeightFamily.exp_power(16.0), 1e6)
    for u in (1e-6, 0.01, 0.3, 0.9, 1.0, 1.1, 3.0):
        assert float(ms(np.array([u]))[0]) == pytest.approx(ms.exact(u), rel=1e-6)


def test_frozen_cluster_size_scaling():
    ratios = []
    for s in (8.0, 16.0, 32.0):
        fam = WeightFamily.exp_power(s)
        sizes = [len(freeze(fam, 1e6, stream(13, k, "sz")).frozen_sets[0]) for k in range(150)]
        ratios.append(np.median(sizes) / s ** 2)
    slope = np.polyfit(np.log([8, 16, 32]), np.log(np.array(ratios) * np.array([64, 256, 1024])), 1)[0]
    assert slope <= 2.2
    assert max(ratios) < 1.5
