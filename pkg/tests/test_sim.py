import math

import numpy as np
import pytest
from scipy import stats

from coopnoma import InterferenceMode, NetworkConfig, PhiMode, analytic, sim

from conftest import zscore


def test_empty_field_without_interferers():
    f = sim.sample_field(NetworkConfig(lam=0.0), np.random.default_rng(0))
    assert f.positions.shape == (0, 2)


def test_field_counts_are_poisson():
    cfg = NetworkConfig()
    rng = np.random.default_rng(1)
    counts = np.array([len(sim.sample_field(cfg, rng, r_trunc=3000.0).positions)
                       for _ in range(10_000)])
    mean = 5e-5 * math.pi * 3000.0 ** 2
    assert mean == pytest.approx(1413.7, abs=0.05)
    assert abs(counts.mean() - mean) < 3 * math.sqrt(mean / counts.size)
    # chi-square goodness of fit on equiprobable Poisson bins
    edges = stats.poisson.ppf(np.linspace(0, 1, 21)[1:-1], mean)
    obs = np.bincount(np.searchsorted(edges, counts, side="left"), minlength=20)
    cdf = stats.poisson.cdf(np.concatenate([edges, [np.inf]]), mean)
    exp = np.diff(np.concatenate([[0.0], cdf])) * counts.size
    p = stats.chisquare(obs, exp, ddof=0).pvalue
    assert p > 0.01


def test_field_uniform_in_disc():
    f = sim.sample_field(NetworkConfig(lam=1e-3), np.random.default_rng(2), r_trunc=100.0)
    r = np.hypot(*f.positions.T)
    assert r.max() <= 100.0
    assert stats.kstest((r / 100.0) ** 2, "uniform").pvalue > 0.01


def test_trial_noiseless_no_interference():
    cfg = NetworkConfig(lam=0.0, p_over_sigma2=1e15, k_max=3)
    f = sim.sample_field(cfg, np.random.default_rng(0))
    t = sim.run_trial(cfg, f, np.random.default_rng(1))
    assert (t.o1_decoded_s2_round, t.o1_decoded_s1_round, t.o2_decoded_round) == (1, 1, 1)
    assert t.renewal_length == 1
    est = sim.estimate_ltat(cfg, 1, seed=0)
    assert est.mean == pytest.approx(2.5)
    out = sim.estimate_outages(cfg, 1, seed=0)
    assert all(e.mean == 0 for e in out.o1 + out.o2 + out.joint)


def test_zero_power_on_near_message():
    cfg = NetworkConfig(beta2=0.0, k_max=3, p_over_sigma2=1e6)
    out = sim.simulate(cfg, 20_000, seed=3)
    # s1 only ever decoded in Phase II, i.e. strictly after user 2's ACK
    got = out["o1_s1"] > 0
    assert got.any()
    assert np.all((out["o2"][got] > 0) & (out["o2"][got] < out["o1_s1"][got]))


def test_sic_ordering():
    out = sim.simulate(NetworkConfig(), 50_000, seed=4)
    s2, s1, o2 = out["o1_s2"], out["o1_s1"], out["o2"]
    phase1 = (s1 > 0) & ((o2 == 0) | (s1 <= o2))
    assert np.all(s2[phase1] > 0) and np.all(s2[phase1] <= s1[phase1])
    assert np.all((out["length"] >= 1) & (out["length"] <= 4))


def test_deterministic_and_worker_invariant(monkeypatch):
    cfg = NetworkConfig(k_max=3)
    monkeypatch.setenv(sim.WORKERS_ENV, "1")
    a = sim.simulate(cfg, 10_000, seed=9)
    b = sim.simulate(cfg, 10_000, seed=9)
    monkeypatch.setenv(sim.WORKERS_ENV, "3")
    c = sim.simulate(cfg, 10_000, seed=9)
    for k in a:
        assert np.array_equal(a[k], b[k]) and np.array_equal(a[k], c[k])
    d = sim.simulate(cfg, 10_000, seed=10)
    assert not np.array_equal(a["o2"], d["o2"])


def test_prefix_stability():
    # block substreams: a longer run extends a shorter one
    cfg = NetworkConfig(k_max=2)
    a = sim.simulate(cfg, 5_000, seed=2)
    b = sim.simulate(cfg, 9_000, seed=2)
    assert np.array_equal(a["o2"][:4096], b["o2"][:4096])


def test_interference_correlation_across_rounds():
    cfg = NetworkConfig()
    x = sim.interference_samples(cfg, 40_000, seed=1)
    lx = np.log(x)  # heavy tails: correlate log powers
    rho = np.corrcoef(lx[:, 0, 0], lx[:, 1, 0])[0, 1]
    assert rho > 0.2
    rho12 = np.corrcoef(lx[:, 0, 0], lx[:, 0, 1])[0, 1]
    assert rho12 > 0.1
    y = np.log(sim.interference_samples(cfg.replace(interference_mode="independent"), 40_000, seed=1))
    r_ind = np.corrcoef(y[:, 0, 0], y[:, 1, 0])[0, 1]
    assert abs(r_ind) < 3 / math.sqrt(40_000)


def test_no_interference_mode_is_zero():
    x = sim.interference_samples(NetworkConfig(interference_mode="none"), 100, seed=1)
    assert np.all(x == 0)


def test_truncation_radius():
    cfg = NetworkConfig()
    r = sim.default_r_trunc(cfg)
    std = math.sqrt(cfg.lam * 4 * math.pi * r ** (2 - 2 * cfg.alpha) / (2 * cfg.alpha - 2))
    assert std <= 1e-4 * cfg.d2 ** -cfg.alpha * (1 + 1e-9)
    assert sim.tail_mean(cfg, r) == pytest.approx(cfg.lam * 2 * math.pi / r)


def test_doubling_truncation_radius():
    cfg = NetworkConfig()
    r = sim.default_r_trunc(cfg)
    a = sim.estimate_outages(cfg, 100_000, seed=5, r_trunc=r)
    b = sim.estimate_outages(cfg, 100_000, seed=5, r_trunc=2 * r)
    for x, y in zip(a.o1 + a.o2, b.o1 + b.o2):
        assert abs(x.mean - y.mean) < max(x.std_error, y.std_error)


def test_std_error_definition():
    e = sim._mean_se(np.array([0, 1, 1, 0, 1], dtype=float))
    assert e.mean == 0.6
    assert e.std_error == pytest.approx(np.std([0, 1, 1, 0, 1], ddof=1) / math.sqrt(5))
    assert sim._mean_se(np.array([1.0])).std_error == 0.0


def test_joint_below_marginals():
    out = sim.estimate_outages(NetworkConfig(), 20_000, seed=8)
    for o1, o2, j in zip(out.o1, out.o2, out.joint):
        assert j.mean <= min(o1.mean, o2.mean)


def test_ltat_against_analytic():
    cfg = NetworkConfig(k_max=2)
    est = sim.estimate_ltat(cfg, 200_000, seed=12)
    assert zscore(analytic.ltat(cfg, PhiMode.EXACT).ltat, est) < 3


def test_independent_mode_against_product_form():
    cfg = NetworkConfig(k_max=3, interference_mode=InterferenceMode.INDEPENDENT)
    out = sim.estimate_outages(cfg, 200_000, seed=13)
    s = analytic.outage_set(cfg)
    for k in range(3):
        assert zscore(s.o1[k], out.o1[k]) < 3
        assert zscore(s.o2[k], out.o2[k]) < 3


def test_cooperation_gain_at_one_distance():
    cfg = NetworkConfig(p_over_sigma2=1e3, d_inter=5.0)
    co = sim.estimate_outages(cfg, 100_000, seed=14)
    nc = sim.estimate_outages(cfg.replace(cooperative=False), 100_000, seed=14)
    assert co.o1[-1].mean == nc.o1[-1].mean
    assert co.o2[-1].mean < nc.o2[-1].mean


def test_conditional_success_matches_closed_form():
    # average the exact conditional success exp(-u (I + noise)) over sampled fields:
    # far lower variance than the indicator, so it exposes field-level bias
    cfg = NetworkConfig(k_max=1).replace(snr_db=30)
    u2 = float(analytic.noma_thresholds(cfg)["u2"])
    x = sim.interference_samples(cfg, 1_000_000, seed=21)[:, 0, 1]
    p = np.exp(-u2 * (x + cfg.noise))
    expect = 1.0 - analytic.outage_set(cfg, PhiMode.EXACT).o2[0]
    assert abs(p.mean() - expect) < 3 * p.std(ddof=1) / math.sqrt(p.size)
