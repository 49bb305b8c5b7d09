"""End-to-end acceptance suite.

Each test drives one experiment through the same path the CLI uses and
records a one-line verdict (see conftest).  Run with ``pytest -v`` to get the
verdict table in the terminal summary.
"""
import time

import pytest

from fpplab import experiments
from fpplab.calculus import zeta, zeta_from_I
from fpplab.cli import records_csv, resolve_config, config_hash, write_artifacts
from fpplab.experiments import run_experiment

LOG_N = {"family": "ExpPower", "sn": {"kind": "log_n"}}


def exp_power(s):
    return {"family": "ExpPower", "sn": {"kind": "explicit", "value": s}}


def run(name, raw, jobs=1):
    cfg = resolve_config(name, raw)
    t0 = time.perf_counter()
    res = run_experiment(name, cfg, jobs)
    return res, {c.name: c for c in res.checks}, time.perf_counter() - t0


def fmt(check):
    return f"{check.name}={check.value:.4g} ({check.bound})"


# -- closed forms ---------------------------------------------------------------------------

def test_c01_rate_closed_form(criterion):
    _, ck, dt = run("calibrate", {"family": exp_power(2), "n": [10, 1000], "params": {"sn_values": [2, 8, 32]}})
    c = ck["lambda_closed_form"]
    criterion(1, "rate vs closed form", c.passed and dt < 1, f"{fmt(c)}, {dt:.2f}s")
    assert c.passed and dt < 1


def test_c02_parameter_identities(criterion):
    _, ck, dt = run("calibrate", {"family": exp_power(2), "n": [10, 1000], "params": {"sn_values": [2, 8, 32]}})
    c = ck["expower_identities"]
    criterion(2, "step-moment identities", c.passed and dt < 10, f"{fmt(c)}, {dt:.2f}s")
    assert c.passed and dt < 10


def test_c03_euler_limit(criterion):
    _, ck, dt = run("calibrate", {"family": exp_power(8), "n": 1000, "params": {"sn_values": [8, 16, 32, 64]}})
    ok = ck["euler_limit_final"].passed and ck["euler_gap_decreasing"].passed and dt < 10
    criterion(3, "Euler-constant limit", ok, f"{fmt(ck['euler_limit_final'])}, "
              f"decreasing={ck['euler_gap_decreasing'].passed}, {dt:.2f}s")
    assert ok


def test_c04_zeta_from_integral(criterion):
    t0 = time.perf_counter()
    worst = max(abs(zeta_from_I(r) - zeta(r)) for r in (0.3, 1.0, 3.0))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 5
    criterion(4, "zeta via integral", ok, f"max error {worst:.2e} (< 1e-6), {dt:.2f}s")
    assert ok


# -- coupling and collision -------------------------------------------------------------------

@pytest.fixture(scope="module")
def coupled():
    # 530 runs at n=20 give 530 * 190 = 100700 derived edge values
    return run("coupling", {"family": exp_power(4), "n": 20, "replicas": 530, "seed": 5})


@pytest.fixture(scope="module")
def large_collide():
    return run("collide", {"family": LOG_N, "n": 1000, "replicas": 470, "seed": 6})


def test_c05_coupling_exact(coupled, criterion):
    res, ck, dt = coupled
    c = ck["structural_mismatches"]
    ok = c.passed and len(res.records) >= 200 and dt < 120
    criterion(5, "coupling structure", ok, f"{len(res.records)} runs, {fmt(c)}, {dt:.1f}s")
    assert ok


def test_c06_collision_matches_oracle(coupled, large_collide, criterion):
    res_a, ck_a, dt_a = coupled
    res_b, ck_b, dt_b = large_collide
    runs = len(res_a.records) + len(res_b.records)
    names = ("collide_vs_dijkstra", "W_equals_Rsum_Tcoll", "endpoints_before_Tcoll", "unique_minimizer")
    ok = ck_a["collide_vs_dijkstra"].passed and all(ck_b[k].passed for k in names) and runs >= 1000
    ok = ok and dt_a + dt_b < 300
    criterion(6, "collision vs shortest path", ok,
              f"{runs} runs, mismatches {int(ck_a['collide_vs_dijkstra'].value)}+"
              f"{int(ck_b['collide_vs_dijkstra'].value)}, {fmt(ck_b['W_equals_Rsum_Tcoll'])}, {dt_a + dt_b:.1f}s")
    assert ok


def test_c07_coupled_weight_law(coupled, criterion):
    res, ck, dt = coupled
    c = ck["ks_E_exp1"]
    ok = c.passed and res.summary["pooled_E"] >= 100_000 and dt < 120
    criterion(7, "coupled edge law", ok, f"{res.summary['pooled_E']} values, {fmt(c)}, {dt:.1f}s")
    assert ok


# -- freezing and invasion percolation ------------------------------------------------------------

@pytest.fixture(scope="module")
def frozen():
    return {s: run("freeze", {"family": exp_power(s), "n": 1000000, "replicas": 1000, "seed": 8})
            for s in (8, 32)}


def test_c08_freezing_window(frozen, criterion):
    ok = all(ck["window_n1000000"].passed for _, ck, _ in frozen.values())
    dt = sum(d for _, _, d in frozen.values())
    ok = ok and dt < 300
    detail = ", ".join(f"s={s}: {ck['window_n1000000'].value:.3f}" for s, (_, ck, _) in frozen.items())
    criterion(8, "freezing window", ok, f"fraction inside {detail}, {dt:.1f}s")
    assert ok


def test_c09_freezing_time_law(frozen, criterion):
    _, ck, dt = frozen[32]
    c = ck["ks_tfr_n1000000"]
    ok = c.passed and dt < 600
    criterion(9, "freezing-time law", ok, f"s=32 {fmt(c)}, {dt:.1f}s")
    assert ok


def test_c10_invasion_maximum(criterion):
    _, ck, dt = run("ip-law", {"family": exp_power(8), "n": 1000, "replicas": 10_000, "seed": 10})
    a, b = ck["ks_ip_vs_q"], ck["oracle_round_trip"]
    ok = a.passed and b.passed and dt < 300
    criterion(10, "invasion maximum law", ok, f"{fmt(a)}, {fmt(b)}, {dt:.1f}s")
    assert ok


# -- characteristics --------------------------------------------------------------------------

def test_c11_walk_vs_direct(criterion):
    _, ck, dt = run("char-probe", {"family": exp_power(8), "n": 1000000, "seed": 11,
                                   "params": {"walks": 10_000, "bp_replicas": 10_000, "compare_lam_t": [2, 6],
                                              "limit_lam_t": [6], "population_lam_t": [2],
                                              "population_replicas": 100, "pairs": 50}})
    cs = [ck["rw_vs_bp_lt2"], ck["rw_vs_bp_lt6"]]
    ok = all(c.passed for c in cs) and dt < 300
    criterion(11, "walk vs direct estimate", ok, ", ".join(fmt(c) for c in cs) + f", {dt:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def probe32():
    return run("char-probe", {"family": exp_power(32), "n": 1000000, "seed": 12,
                              "params": {"walks": 10_000, "bp_replicas": 2000, "compare_lam_t": [2],
                                         "limit_lam_t": [6, 10], "population_lam_t": [6],
                                         "population_replicas": 10_000, "K": 5, "two_lam_t": 8,
                                         "pairs": 2000}})


def test_c12_one_vertex_limit(probe32, criterion):
    _, ck, dt = probe32
    cs = [ck["one_vertex_lt6"], ck["one_vertex_lt10"], ck["population_lt6"]]
    ok = all(c.passed for c in cs) and dt < 600
    criterion(12, "one-vertex limit", ok, ", ".join(fmt(c) for c in cs) + f", {dt:.1f}s")
    assert ok


def test_c13_two_vertex_probe(probe32, criterion):
    _, ck, dt = probe32
    c = ck["two_vertex_over_sn"]
    ok = c.passed and dt < 1200
    criterion(13, "truncated two-vertex probe", ok, f"{fmt(c)}, {dt:.1f}s")
    assert ok


# -- large-n trends -----------------------------------------------------------------------------

TREND = {"family": LOG_N, "replicas": 2000, "seed": 7}


@pytest.fixture(scope="module")
def hopcount():
    return run("hopcount-clt", dict(TREND, n=[500, 2000, 8000]))


def test_c14_hopcount_trends(hopcount, criterion):
    res, ck, dt = hopcount
    trends = [ck["abs_mean_decreasing"], ck["final_variance"], ck["ks_decreasing"]]
    final = ck["final_abs_mean"]
    trends_ok = all(c.passed for c in trends) and dt < 3600
    means = ", ".join(f"{k}:{v['mean']:+.2f}" for k, v in res.summary["by_n"].items())
    criterion(14, "hopcount CLT trend", trends_ok and final.passed,
              f"means {means}; {fmt(final)}; " + ", ".join(fmt(c) for c in trends) + f"; {dt:.0f}s",
              expected_failure=trends_ok)
    assert trends_ok


@pytest.mark.xfail(strict=True, reason="the centring offset decays like 1/sqrt(log n); needs n far beyond desk scale")
def test_c14_hopcount_final_mean(hopcount):
    _, ck, _ = hopcount
    assert ck["final_abs_mean"].passed


def test_c15_weight_limit_trend(hopcount, criterion):
    _, _, dt_h = hopcount
    _, ck, dt = run("weight-limit", dict(TREND, n=[500, 2000]))
    a, b = ck["ks_q2_n2000"], ck["ks_decreasing"]
    ok = a.passed and b.passed and dt + dt_h < 3600
    criterion(15, "weight limit trend", ok, f"{fmt(a)}, decreasing={b.passed}, {dt:.1f}s on shared batches")
    assert ok


# -- collision point process ----------------------------------------------------------------------

def test_c16_cox_vs_physical(criterion):
    _, ck, dt = run("cox-points", {"family": exp_power(4), "n": 50, "replicas": 500, "seed": 16,
                                   "params": {"mode": "crosscheck"}})
    c = ck["ks_H_cox_vs_physical"]
    ok = c.passed and dt < 600
    criterion(16, "Cox vs physical hopcount", ok, f"{fmt(c)}, {dt:.1f}s")
    assert ok


def test_c17_rescaled_heights(criterion):
    res, ck, dt = run("cox-points", {"family": LOG_N, "n": [1000, 10000], "replicas": 2000, "seed": 17,
                                     "params": {"mode": "pnstar"}})
    cs = [ck["abs_mean"], ck["variance"], ck["abs_corr"]]
    ok = all(c.passed for c in cs) and dt < 1800
    criterion(17, "rescaled collision heights", ok, ", ".join(fmt(c) for c in cs) + f", {dt:.0f}s")
    assert ok


# -- determinism ------------------------------------------------------------------------------

SMALL = {
    "calibrate": {"family": exp_power(2), "n": 10},
    "conditions": {"family": {"family": "LogPower", "rho": 1.0, "kappa": 0.5}, "n": 1000},
    "ip-law": {"family": exp_power(8), "n": 1000, "replicas": 30},
    "freeze": {"family": exp_power(8), "n": 1000000, "replicas": 10},
    "coupling": {"family": exp_power(4), "n": 20, "replicas": 6},
    "collide": {"family": LOG_N, "n": 200, "replicas": 6},
    "weight-limit": {"family": LOG_N, "n": [200, 400], "replicas": 8},
    "hopcount-clt": {"family": LOG_N, "n": [200, 400], "replicas": 8},
    "cox-points": {"family": LOG_N, "n": 1000, "replicas": 4, "params": {"mode": "pnstar"}},
    "char-probe": {"family": exp_power(8), "n": 1000000,
                   "params": {"walks": 200, "bp_replicas": 200, "compare_lam_t": [2], "limit_lam_t": [6],
                              "population_lam_t": [2], "population_replicas": 50, "pairs": 40}},
}


def _records(name, raw, jobs=1):
    saved = dict(experiments._BATCH_CACHE)
    experiments._BATCH_CACHE.clear()
    try:
        cfg = resolve_config(name, dict(raw, seed=18))
        return records_csv(run_experiment(name, cfg, jobs), config_hash(cfg))
    finally:
        experiments._BATCH_CACHE.clear()
        experiments._BATCH_CACHE.update(saved)


def test_c18_determinism(tmp_path, criterion):
    t0 = time.perf_counter()
    differ = [name for name, raw in SMALL.items() if _records(name, raw) != _records(name, raw)]
    parallel = [name for name in ("freeze", "collide") if _records(name, SMALL[name], jobs=2)
                != _records(name, SMALL[name])]
    cfg = resolve_config("calibrate", dict(SMALL["calibrate"], seed=18))
    res = run_experiment("calibrate", cfg)
    outs = [write_artifacts(cfg, res, tmp_path / tag) for tag in ("a", "b")]
    files = [f for f in ("records.csv", "summary.json", "plotdata.csv", "figure.png")
             if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    dt = time.perf_counter() - t0
    ok = not differ and not parallel and not files
    criterion(18, "determinism", ok, f"{len(SMALL)} experiments re-run, differing: {differ or 'none'}; "
              f"jobs=2 differing: {parallel or 'none'}; artifacts differing: {files or 'none'}; {dt:.1f}s")
    assert ok
