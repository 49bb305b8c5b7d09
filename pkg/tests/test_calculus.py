import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from fpplab.calculus import (EULER_GAMMA, I_func, bp_model, chi_n, chi_n_K, derive_params, gw_survival,
                             laplace_mu, rw_char_mean, solve_lambda, step_law, zeta, zeta_from_I)
from fpplab.errors import DomainError
from fpplab.stats import ks_test, target_cdfs
from fpplab.weights import WeightFamily, WeightScale

EP2 = WeightFamily.exp_power(2.0)
LOGP = WeightFamily.from_config({"family": "LogPower", "rho": 1.0, "kappa": 0.5})
LAM_10_2 = 100 * (math.sqrt(math.pi) / 2) ** 2


def test_laplace_examples():
    assert LAM_10_2 == pytest.approx(78.5398, abs=1e-4)
    assert laplace_mu(EP2, 10, LAM_10_2) == pytest.approx(1.0, rel=1e-12)
    assert laplace_mu(EP2, 10, 2 * LAM_10_2) == pytest.approx(2 ** -0.5, rel=1e-12)


@pytest.mark.parametrize("s", [2.0, 8.0, 32.0])
@pytest.mark.parametrize("lam", [0.3, 1.0, 5.0])
def test_laplace_quadrature_matches_closed_form(s, lam):
    m = bp_model(WeightFamily.exp_power(s), 1000)
    assert m.laplace(lam, "quad") == pytest.approx(m.laplace(lam, "closed"), rel=1e-7)


def test_laplace_decreasing_in_rate():
    lam = solve_lambda(LOGP, 1000)
    assert laplace_mu(LOGP, 1000, lam / 2) > laplace_mu(LOGP, 1000, lam) > laplace_mu(LOGP, 1000, 2 * lam)


def test_solve_lambda_small_example():
    assert solve_lambda(EP2, 10) == pytest.approx(78.5398163397, rel=1e-10)
    assert solve_lambda(EP2, 10, method="quad") == pytest.approx(LAM_10_2, rel=1e-7)


@pytest.mark.parametrize("fam", [EP2, LOGP], ids=["ExpPower", "LogPower"])
@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_root_identity(fam, a):
    m = bp_model(fam, 1000)
    assert a * m.laplace(m.lam(a, "quad"), "quad") == pytest.approx(1.0, abs=1e-10)


def test_lambda_increasing_in_a():
    m = bp_model(LOGP, 1000)
    vals = [m.lam(a) for a in (0.5, 1.0, 2.0, 4.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("s", [2.0, 8.0, 32.0])
def test_tilted_rate_scaling(s):
    m = bp_model(WeightFamily.exp_power(s), 1000)
    for a in (0.5, 2.0):
        expect = a * math.exp(s * gammaln(1 + 1 / s))
        assert m.lam(a ** (1 / s), "quad") == pytest.approx(expect, rel=1e-8)


def test_euler_limit_at_large_sn():
    bp = derive_params(WeightFamily.exp_power(64.0), 1000)
    assert abs(bp.lambda_norm - math.exp(-EULER_GAMMA)) < 0.01
    assert math.exp(-EULER_GAMMA) == pytest.approx(0.561459, abs=1e-6)


@pytest.mark.parametrize("s", [2.0, 8.0, 32.0])
@pytest.mark.parametrize("n", [10, 1000])
def test_expower_parameter_identities(s, n):
    bp = derive_params(WeightFamily.exp_power(s), n, "quad")
    assert s * bp.lambda_norm * bp.mean_D_norm == pytest.approx(1.0, abs=1e-7)
    assert s * bp.lambda_norm ** 2 * bp.mean_D2_norm == pytest.approx(1 + 1 / s, abs=1e-7)
    assert bp.phi_n == pytest.approx(s, rel=1e-7)
    assert bp.phi_n_fd == pytest.approx(s, rel=1e-4)


@pytest.mark.parametrize("cfg", [{"family": "LogPower", "rho": 1.0, "kappa": 0.5},
                                  {"family": "ExpExp", "rho": 1.0, "alpha": 0.5},
                                  {"family": "InvPower", "rho": 2.0, "alpha": 0.5}], ids=lambda d: d["family"])
def test_mean_step_near_reciprocal_rate(cfg):
    bp = derive_params(WeightFamily.from_config(cfg), 1e6)
    assert bp.s_n >= 8
    assert 0.9 <= bp.s_n * bp.lambda_norm * bp.mean_D_norm <= 1.1
    assert bp.phi_n == pytest.approx(bp.phi_n_fd, rel=1e-4)


def test_step_law_is_probability():
    law = step_law(WeightFamily.exp_power(8.0), 1000)
    assert law.mass == pytest.approx(1.0, abs=1e-8)
    g = float(law.cdf(1.0)[0])
    assert 0 < g < 1


def test_step_mean_matches_moment():
    fam = WeightFamily.exp_power(8.0)
    law = step_law(fam, 1000)
    d = law.sample_D(100_000, np.random.default_rng(1))
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert abs(d.mean() - derive_params(fam, 1000).mean_D_norm) < 3 * se


def test_sized_step_rescales_to_exponential():
    law = step_law(WeightFamily.exp_power(32.0), 1e6)
    d = law.sample_Dstar(100_000, np.random.default_rng(2))
    D, _ = ks_test(law.lam * d, target_cdfs()["Exp1"])
    assert D < 0.02


def test_walk_at_sn_steps_is_gamma_one():
    s = 32.0
    law = step_law(WeightFamily.exp_power(s), 1e6)
    rng = np.random.default_rng(3)
    walk = np.zeros(100_000)
    for _ in range(int(s)):
        walk += law.sample_D(walk.size, rng)
    D, _ = ks_test(law.lam * walk, lambda x: target_cdfs()["Gamma"](x, 1.0))
    assert D < 0.02


def test_zero_characteristic():
    m, se = rw_char_mean(lambda age: np.zeros_like(age), 5.0, 1.0, 50, np.random.default_rng(0), EP2, 10)
    assert m == 0.0 and se == 0.0


def test_zeta_values():
    assert zeta(1.0) == 1.0
    assert zeta(2.0) == pytest.approx(4 / 3 * math.log(2), rel=1e-14)
    assert zeta(2.0) == pytest.approx(0.92420, abs=1e-5)
    assert I_func(0.0) == 0.0
    with pytest.raises(DomainError):
        zeta(0.0)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_zeta_from_integral(r):
    assert zeta_from_I(r) == pytest.approx(zeta(r), abs=1e-6)


def test_zeta_continuous_through_one():
    for d in (1e-7, 2e-6, 1e-4):
        assert zeta(1 + d) == pytest.approx(2 * (1 + d) * math.log1p(d) / ((2 + d) * d), rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(lr=st.floats(-6, 6))
def test_zeta_symmetric(lr):
    r = math.exp(lr)
    assert zeta(r) == pytest.approx(zeta(1 / r), rel=1e-12, abs=1e-300)


def test_two_vertex_characteristic():
    ws = WeightScale(WeightFamily.exp_power(8.0), 1000)
    assert chi_n(ws, 0.5, 0.5) == pytest.approx(1.0, rel=1e-12)
    assert chi_n(ws, 1.0, -0.1) == 0.0
    K = 3.0
    for t in (0.5, 1.0, 5.0, 50.0):
        assert chi_n_K(ws, t, t, K) <= 2 * K / ws.s + 1e-12
    assert chi_n_K(ws, 50.0, 50.0, K) == pytest.approx(2 * K / ws.s, rel=1e-12)
    with pytest.raises(DomainError):
        chi_n_K(ws, 1.0, 1.0, 8.0)


def test_gw_survival_values():
    assert gw_survival(1.0) == 0.0
    assert gw_survival(0.3) == 0.0
    assert gw_survival(2.0) == pytest.approx(0.79681, abs=1e-5)
    assert gw_survival(4.0) == pytest.approx(0.98017, abs=1e-5)


@settings(max_examples=80, deadline=None)
@given(x=st.floats(0, 50), dx=st.floats(0, 5))
def test_gw_survival_fixed_point(x, dx):
    q = float(gw_survival(x))
    assert 0 <= q <= 1
    assert abs(1 - math.exp(-x * q) - q) <= 1e-12
    assert float(gw_survival(x + dx)) >= q
