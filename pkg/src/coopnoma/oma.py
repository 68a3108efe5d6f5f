"""HARQ-assisted OMA baseline: orthogonal split beta2 / (1 - beta2), no SIC, no relaying."""
from __future__ import annotations

import math
from math import comb

import numpy as np

from .analytic import (GridResult, OutageSet, PsiTable, ThroughputReport, _check_round,
                       _clip, _scalar, _unit_phi_coef, assemble, report_from_outages)
from .config import InterferenceMode, NetworkConfig, PhiMode

OMA_SIDES = {"a1s": 1, "a1f": 1, "a2s": 2, "a2f": 2}


def _inflated(rate, share):
    # (2^(R/share) - 1); zero rate costs nothing even on a zero share
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        g = np.expm1(np.where(rate == 0, 0.0, rate / share) * math.log(2.0))
    return np.where(rate == 0, 0.0, np.where(share > 0, g, np.inf))


def oma_thresholds(cfg: NetworkConfig, r1=None, r2=None, beta2=None) -> dict:
    a = cfg.alpha
    r1 = np.asarray(cfg.r1 if r1 is None else r1, dtype=float)
    r2 = np.asarray(cfg.r2 if r2 is None else r2, dtype=float)
    b2 = np.asarray(cfg.beta2 if beta2 is None else beta2, dtype=float)
    r1, r2, b2 = np.broadcast_arrays(r1, r2, b2)
    l1 = float(cfg.d1) ** -a
    l2 = float(cfg.d2) ** -a
    return {
        "a1s": _inflated(r1, b2) / l1,
        "a1f": np.expm1(r1 * math.log(2.0)) / l1,
        "a2s": _inflated(r2, 1.0 - b2) / l2,
        "a2f": np.expm1(r2 * math.log(2.0)) / l2,
    }


def _oma_table(cfg, phi_mode, r1=None, r2=None, beta2=None, noise=None, lam=None):
    thr = oma_thresholds(cfg, r1, r2, beta2)
    return PsiTable(thr, OMA_SIDES, cfg.alpha, cfg.d_inter,
                    cfg.noise if noise is None else noise,
                    cfg.lam if lam is None else lam,
                    phi_mode, cfg.interference_mode)


def _fail1_succ2(ps, K, k):
    tot = 0.0
    for t1 in range(k + 1):
        for t2 in range(K - k + 1):
            for t3 in range(k):
                c = comb(k, t1) * comb(K - k, t2) * comb(k - 1, t3)
                c = -c if (t1 + t2 + t3) % 2 else c
                tot = tot + c * ps(("a1s", t1), ("a1f", t2), ("a2s", t3 + 1))
    return tot


def _succ1_fail2(ps, K, l):
    tot = 0.0
    for t1 in range(l):
        for t2 in range(l + 1):
            for t3 in range(K - l + 1):
                c = comb(l - 1, t1) * comb(l, t2) * comb(K - l, t3)
                c = -c if (t1 + t2 + t3) % 2 else c
                tot = tot + c * ps(("a1s", t1 + 1), ("a2s", t2), ("a2f", t3))
    return tot


def _both_fail(ps, K):
    tot = 0.0
    for t1 in range(K + 1):
        for t2 in range(K + 1):
            c = comb(K, t1) * comb(K, t2)
            c = -c if (t1 + t2) % 2 else c
            tot = tot + c * ps(("a1s", t1), ("a2s", t2))
    return tot


def oma_term_fail1_succ2(k, cfg, phi_mode=PhiMode.APPROX):
    _check_round("k", k, 1, cfg.k_max)
    return _scalar(_fail1_succ2(_oma_table(cfg, phi_mode), cfg.k_max, k))


def oma_term_succ1_fail2(l, cfg, phi_mode=PhiMode.APPROX):
    _check_round("l", l, 1, cfg.k_max)
    return _scalar(_succ1_fail2(_oma_table(cfg, phi_mode), cfg.k_max, l))


def oma_term_both_fail(cfg, phi_mode=PhiMode.APPROX):
    return _scalar(_both_fail(_oma_table(cfg, phi_mode), cfg.k_max))


def _stacks(ps, K):
    o1, o2, j = [], [], []
    for kk in range(1, K + 1):
        both = _both_fail(ps, kk)
        o1.append(sum(_fail1_succ2(ps, kk, k) for k in range(1, kk + 1)) + both)
        o2.append(sum(_succ1_fail2(ps, kk, l) for l in range(1, kk + 1)) + both)
        j.append(both)
    f = lambda xs: np.stack([_clip(np.broadcast_to(x, ps.out_shape)) for x in xs])
    return f(o1), f(o2), f(j)


def evaluate_grid_oma(cfg: NetworkConfig, phi_mode=PhiMode.APPROX, *, r1=None, r2=None,
                      beta2=None, p_over_sigma2=None, lam=None) -> GridResult:
    noise = None if p_over_sigma2 is None else 1.0 / np.asarray(p_over_sigma2, dtype=float)
    ps = _oma_table(cfg, phi_mode, r1, r2, beta2, noise, lam)
    o1, o2, j = _stacks(ps, cfg.k_max)
    rr1 = np.asarray(cfg.r1 if r1 is None else r1, dtype=float)
    rr2 = np.asarray(cfg.r2 if r2 is None else r2, dtype=float)
    eta, et, _, _ = assemble(o1, o2, j, rr1, rr2)
    shape = ps.out_shape
    return GridResult(o1, o2, j, np.broadcast_to(eta, shape), np.broadcast_to(et, shape),
                      np.ones(shape, dtype=bool))


def oma_outages(cfg: NetworkConfig, phi_mode=PhiMode.APPROX) -> OutageSet:
    g = evaluate_grid_oma(cfg, phi_mode)
    return OutageSet(g.o1.reshape(-1).copy(), g.o2.reshape(-1).copy(), g.joint.reshape(-1).copy())


def oma_ltat(cfg: NetworkConfig, phi_mode=PhiMode.APPROX) -> ThroughputReport:
    return report_from_outages(oma_outages(cfg, phi_mode), cfg.r1, cfg.r2)


def success_k1(x, d, cfg: NetworkConfig):
    """Single-round success probability at normalised rate x over distance d.

    Rayleigh fading with interference handled per the configured mode;
    both correlated and per-round-independent fields agree at K = 1.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        u = np.expm1(x * math.log(2.0)) * float(d) ** cfg.alpha
    lam = 0.0 if cfg.interference_mode is InterferenceMode.NONE else cfg.lam
    return np.exp(-cfg.noise * u - lam * _unit_phi_coef(cfg.alpha) * u ** (2.0 / cfg.alpha))


def phi_k1(x, d, cfg):
    return np.asarray(x, dtype=float) * success_k1(x, d, cfg)


def oma_k1_closed_form(cfg: NetworkConfig):
    """(ltat, outage1, outage2) for K = 1 from the per-user success probabilities."""
    if cfg.k_max != 1:
        raise ValueError("closed form holds only for k_max = 1")
    b2 = cfg.beta2
    eta = 0.0
    outs = []
    for rate, share, d in ((cfg.r1, b2, cfg.d1), (cfg.r2, 1.0 - b2, cfg.d2)):
        if rate == 0:
            outs.append(0.0)
            continue
        if share <= 0:
            outs.append(1.0)
            continue
        ok = float(success_k1(rate / share, d, cfg))
        eta += share * (rate / share) * ok
        outs.append(1.0 - ok)
    return eta, outs[0], outs[1]
