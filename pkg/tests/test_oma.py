import math
from math import comb

import numpy as np
import pytest

from coopnoma import OmaConfig, PhiMode, analytic, oma, sim
from coopnoma.analytic import PsiArgs, psi

from conftest import zscore


@pytest.fixture
def ocfg():
    return OmaConfig(p_over_sigma2=1e3, r1=1.0, r2=0.5, beta2=0.5)


def test_share_endpoints():
    with pytest.raises(ValueError):
        OmaConfig(beta2=0.0, r1=1.0)
    with pytest.raises(ValueError):
        OmaConfig(beta2=1.0, r2=0.5)
    OmaConfig(beta2=1.0, r2=0.0)


def test_thresholds(ocfg):
    th = oma.oma_thresholds(ocfg)
    assert th["a1s"] == pytest.approx((2 ** 2 - 1) * 125)
    assert th["a1f"] == pytest.approx(125)
    assert th["a2s"] == pytest.approx((2 ** 1 - 1) * 1000)
    assert th["a2f"] == pytest.approx((2 ** 0.5 - 1) * 1000)


def test_noiseless_zero(ocfg):
    cfg = ocfg.replace(lam=0.0, p_over_sigma2=1e15, k_max=3)
    vals = [oma.oma_term_both_fail(cfg)]
    for k in range(1, 4):
        vals += [oma.oma_term_fail1_succ2(k, cfg), oma.oma_term_succ1_fail2(k, cfg)]
    assert max(abs(v) for v in vals) < 1e-9
    assert oma.oma_term_both_fail(ocfg.replace(r1=0.0, r2=0.0)) == 0.0


def test_last_round_phase2_empty(ocfg):
    cfg = ocfg.replace(k_max=2)
    th = {k: float(v) for k, v in oma.oma_thresholds(cfg).items()}
    ref = 0.0
    for t1 in range(3):
        for t3 in range(2):
            args = PsiArgs((th["a1s"],), (t1,), (th["a2s"],), (t3 + 1,))
            ref += (-1) ** (t1 + t3) * comb(2, t1) * comb(1, t3) * psi(args, cfg)
    assert oma.oma_term_fail1_succ2(2, cfg) == pytest.approx(ref, rel=1e-12)


def test_k1_closed_form_matches_general(ocfg):
    cfg = ocfg.replace(k_max=1)
    eta, o1, o2 = oma.oma_k1_closed_form(cfg)
    rep = oma.oma_ltat(cfg)
    assert eta == pytest.approx(rep.ltat, rel=1e-10)
    assert o1 == pytest.approx(rep.outages.o1[0], rel=1e-10)
    assert o2 == pytest.approx(rep.outages.o2[0], rel=1e-10)
    with pytest.raises(ValueError):
        oma.oma_k1_closed_form(ocfg)


def test_k1_degenerate_split(ocfg):
    cfg = ocfg.replace(k_max=1, beta2=1.0, r2=0.0)
    eta, o1, o2 = oma.oma_k1_closed_form(cfg)
    assert o2 == 0.0
    assert eta == pytest.approx(float(oma.phi_k1(cfg.r1, cfg.d1, cfg)), rel=1e-14)


def test_zero_outage_ceiling():
    z = np.zeros(3)
    assert analytic.report_from_outages(analytic.OutageSet(z, z, z), 1.0, 0.5).ltat == 1.5


def test_structure(ocfg):
    s = oma.oma_outages(ocfg)
    assert np.all(np.diff(s.o1) <= 1e-15) and np.all(np.diff(s.o2) <= 1e-15)
    assert np.all(s.joint <= np.minimum(s.o1, s.o2) + 1e-15)


def test_users_decouple(ocfg):
    # the two links share one interferer field, so failures correlate positively
    s = oma.oma_outages(ocfg)
    assert s.joint[-1] >= s.o1[-1] * s.o2[-1]


def _classify(out, K):
    s1, o2 = out["o1_s1"], out["o2"]
    ev = {"both": (s1 == 0) & (o2 == 0)}
    for k in range(1, K + 1):
        ev[("f1s2", k)] = (s1 == 0) & (o2 == k)
        ev[("s1f2", k)] = (s1 == k) & (o2 == 0)
    return {key: sim._mean_se(v) for key, v in ev.items()}


@pytest.mark.parametrize("K,r1", [(1, 1.0), (2, 1.0), (2, 0.0)])
def test_terms_against_mc(ocfg, K, r1):
    cfg = ocfg.replace(k_max=K, r1=r1)
    mc = _classify(sim.simulate(cfg, 400_000, seed=31 + K, protocol="oma"), K)
    E = PhiMode.EXACT
    an = {"both": oma.oma_term_both_fail(cfg, E)}
    for k in range(1, K + 1):
        an[("f1s2", k)] = oma.oma_term_fail1_succ2(k, cfg, E)
        an[("s1f2", k)] = oma.oma_term_succ1_fail2(k, cfg, E)
    z = {key: zscore(an[key], mc[key]) for key in an}
    assert max(z.values()) < 3, z


def test_ltat_against_mc(ocfg):
    cfg = ocfg.replace(k_max=2)
    est = sim.estimate_ltat(cfg, 400_000, seed=40, protocol="oma")
    assert zscore(oma.oma_ltat(cfg, PhiMode.EXACT).ltat, est) < 3
    k1 = ocfg.replace(k_max=1)
    est1 = sim.estimate_ltat(k1, 400_000, seed=41, protocol="oma")
    assert zscore(oma.oma_k1_closed_form(k1)[0], est1) < 3


def test_grid_matches_scalar(ocfg):
    g = oma.evaluate_grid_oma(ocfg, r1=np.array([0.5, 1.0]), r2=np.array([[0.5], [1.0]]))
    for i, r2 in enumerate((0.5, 1.0)):
        for j, r1 in enumerate((0.5, 1.0)):
            assert g.ltat[i, j] == pytest.approx(oma.oma_ltat(ocfg.replace(r1=r1, r2=r2)).ltat, rel=1e-12)
