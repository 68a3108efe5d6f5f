"""Monte Carlo ground truth for the two-phase cooperative HARQ-NOMA protocol.

Trials run in fixed blocks of ``BLOCK`` renewal cycles. Every random draw of
block b comes from ``SeedSequence(seed, spawn_key=(b, ...))`` keyed by the
round and link it feeds, so estimates do not depend on the worker count and
correlated / per-round-independent runs share their signal fading.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import OutageSet, noma_thresholds
from .config import InterferenceMode, NetworkConfig
from .oma import oma_thresholds

BLOCK = 4096
WORKERS_ENV = "COOPNOMA_WORKERS"
R_MIN = 100.0
TAIL_STD_TARGET = 1e-4  # residual std of the truncated field, relative to l(d2)

# fading links; keyed into the RNG so every (round, link) has its own stream
_L_INT1, _L_INT2, _L_SIG1, _L_SIG2, _L_EQ = range(5)


@dataclass
class InterfererField:
    positions: np.ndarray  # (n, 2), midpoint of the two users at the origin
    r_trunc: float


@dataclass
class TrialOutcome:
    """Rounds are 1-based; None means never decoded within k_max."""
    o1_decoded_s2_round: int | None
    o1_decoded_s1_round: int | None
    o2_decoded_round: int | None
    renewal_length: int


@dataclass
class McEstimate:
    mean: float
    std_error: float
    trials: int


def default_r_trunc(cfg: NetworkConfig) -> float:
    """Disc radius beyond which the field is replaced by its mean.

    The residual standard deviation of the interference beyond r is
    sqrt(lam 4 pi r^(2-2a) / (2a-2)) for unit-mean Rayleigh power; r is chosen
    so that it is at most TAIL_STD_TARGET * l(d2).
    """
    a = cfg.alpha
    if cfg.lam == 0:
        return R_MIN
    target = TAIL_STD_TARGET * cfg.d2 ** -a
    coef = cfg.lam * 4.0 * math.pi / (2.0 * a - 2.0)
    r = (coef / target ** 2) ** (1.0 / (2.0 * a - 2.0))
    return float(max(r, R_MIN, 20.0 * (cfg.d2 + cfg.d_inter)))


def tail_mean(cfg: NetworkConfig, r_trunc: float) -> float:
    """Mean interference from the PPP outside the disc (seen from its centre)."""
    if cfg.lam == 0 or not np.isfinite(r_trunc):
        return 0.0
    a = cfg.alpha
    return cfg.lam * 2.0 * math.pi * r_trunc ** (2.0 - a) / (a - 2.0)


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def _draw_points(lam, r, n_trials, rng):
    counts = rng.poisson(lam * math.pi * r * r, size=n_trials)
    total = int(counts.sum())
    rad = r * np.sqrt(rng.random(total))
    ang = 2.0 * math.pi * rng.random(total)
    pos = np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))
    owner = np.repeat(np.arange(n_trials), counts)
    return pos, owner, counts


def sample_field(cfg: NetworkConfig, rng: np.random.Generator, r_trunc: float | None = None) -> InterfererField:
    r = default_r_trunc(cfg) if r_trunc is None else float(r_trunc)
    pos, _, _ = _draw_points(cfg.lam, r, 1, rng) if cfg.lam > 0 else (np.zeros((0, 2)), None, None)
    return InterfererField(pos, r)


def _path_gain(pos, centre_x, alpha):
    d2 = (pos[:, 0] - centre_x) ** 2 + pos[:, 1] ** 2
    return d2 ** (-alpha / 2.0)


class _Block:
    """Random inputs of one block: per-round interference and signal fading."""

    def __init__(self, cfg, n, seed, b, r_trunc, field=None, rng=None):
        self.cfg, self.n, self.seed, self.b, self.r = cfg, n, seed, b, r_trunc
        self.rng = rng  # single-trial mode draws everything from one generator
        self.mode = cfg.interference_mode
        self.tail = tail_mean(cfg, r_trunc) if self.mode is not InterferenceMode.NONE else 0.0
        self.half = cfg.d_inter / 2.0
        if self.mode is InterferenceMode.CORRELATED and cfg.lam > 0:
            if field is not None:
                pos, owner = field.positions, np.zeros(len(field.positions), dtype=int)
            else:
                pos, owner, _ = _draw_points(cfg.lam, r_trunc, n, self._gen(0))
            self.owner = owner
            self.g1 = _path_gain(pos, -self.half, cfg.alpha)
            self.g2 = _path_gain(pos, self.half, cfg.alpha)

    def _gen(self, *key):
        return self.rng if self.rng is not None else _rng(self.seed, self.b, *key)

    def _field_sum(self, gains, owner, rng):
        return np.bincount(owner, weights=gains * rng.exponential(size=gains.size), minlength=self.n)

    def interference(self, j):
        cfg, n = self.cfg, self.n
        if self.mode is InterferenceMode.NONE or cfg.lam == 0:
            return np.zeros(n), np.zeros(n)
        if self.mode is InterferenceMode.CORRELATED:
            i1 = self._field_sum(self.g1, self.owner, self._gen(1, j, _L_INT1))
            i2 = self._field_sum(self.g2, self.owner, self._gen(1, j, _L_INT2))
        else:
            out = []
            for user, centre in ((0, -self.half), (1, self.half)):
                rng = self._gen(2, j, user)
                pos, owner, _ = _draw_points(cfg.lam, self.r, n, rng)
                out.append(self._field_sum(_path_gain(pos, centre, cfg.alpha), owner, rng))
            i1, i2 = out
        return i1 + self.tail, i2 + self.tail

    def fading(self, j, link):
        return self._gen(1, j, link).exponential(size=self.n)


def _protocol(cfg, blk: _Block, protocol="noma"):
    """Run k_max rounds; returns 1-based decode rounds (0 = never) and renewal lengths."""
    n, K = blk.n, cfg.k_max
    s2_1 = np.zeros(n, dtype=np.int8)
    s1_1 = np.zeros(n, dtype=np.int8)
    s2_2 = np.zeros(n, dtype=np.int8)
    if protocol == "noma":
        th = {k: float(v) for k, v in noma_thresholds(cfg).items() if k != "feasible"}
    else:
        th = {k: float(v) for k, v in oma_thresholds(cfg).items()}
    for j in range(1, K + 1):
        i1, i2 = blk.interference(j)
        n1 = i1 + cfg.noise
        n2 = i2 + cfg.noise
        e1 = blk.fading(j, _L_SIG1)
        e2 = blk.fading(j, _L_SIG2)
        eq = blk.fading(j, _L_EQ)
        # phase is fixed by ACKs from earlier rounds
        peer2 = s2_2 > 0
        peer1 = s1_1 > 0
        act1 = ~peer1
        act2 = s2_2 == 0
        if protocol == "noma":
            ok_s2 = (s2_1 > 0) | (e1 >= n1 * th["u12"])
            new_s2 = act1 & ~peer2 & (s2_1 == 0) & ok_s2
            s2_1[new_s2] = j
            dec1 = np.where(peer2, e1 >= n1 * th["u1p2"], ok_s2 & (e1 >= n1 * th["u11"]))
            dec2 = np.where(peer1, eq >= n2 * th["u2p2"], e2 >= n2 * th["u2"])
        else:
            dec1 = np.where(peer2, e1 >= n1 * th["a1f"], e1 >= n1 * th["a1s"])
            dec2 = np.where(peer1, e2 >= n2 * th["a2f"], e2 >= n2 * th["a2s"])
        s1_1[act1 & dec1] = j
        s2_2[act2 & dec2] = j
    done = (s1_1 > 0) & (s2_2 > 0)
    length = np.where(done, np.maximum(s1_1, s2_2), K).astype(np.int8)
    return s2_1, s1_1, s2_2, length


def run_trial(cfg: NetworkConfig, field: InterfererField, rng: np.random.Generator,
              protocol="noma") -> TrialOutcome:
    """One renewal cycle on a given field (used as-is in correlated mode)."""
    blk = _Block(cfg, 1, None, None, field.r_trunc, field=field, rng=rng)
    s2, s1, o2, length = (int(v[0]) for v in _protocol(cfg, blk, protocol))
    return TrialOutcome(s2 or None, s1 or None, o2 or None, length)


def _run_block(args):
    cfg, n, seed, b, r_trunc, protocol = args
    return _protocol(cfg, _Block(cfg, n, seed, b, r_trunc), protocol)


def _workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def simulate(cfg: NetworkConfig, trials: int, seed: int, *, protocol="noma", r_trunc=None):
    """Per-trial decode rounds for ``trials`` renewal cycles.

    Returns a dict of int arrays: o1_s2, o1_s1, o2 (0 = never) and length.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    r = default_r_trunc(cfg) if r_trunc is None else float(r_trunc)
    nblocks = -(-trials // BLOCK)
    jobs = [(cfg, min(BLOCK, trials - b * BLOCK), int(seed), b, r, protocol) for b in range(nblocks)]
    w = _workers()
    if w > 1 and nblocks > 1:
        with ProcessPoolExecutor(max_workers=w) as ex:
            parts = list(ex.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    keys = ("o1_s2", "o1_s1", "o2", "length")
    return {k: np.concatenate([p[i] for p in parts]) for i, k in enumerate(keys)}


def _mean_se(x) -> McEstimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(float(x.mean()), se, n)


@dataclass
class McOutages:
    o1: list
    o2: list
    joint: list

    def means(self) -> OutageSet:
        f = lambda xs: np.array([e.mean for e in xs])
        return OutageSet(f(self.o1), f(self.o2), f(self.joint))


def outages_from(out, k_max) -> McOutages:
    o1, o2, jt = [], [], []
    for kappa in range(1, k_max + 1):
        f1 = (out["o1_s1"] == 0) | (out["o1_s1"] > kappa)
        f2 = (out["o2"] == 0) | (out["o2"] > kappa)
        o1.append(_mean_se(f1))
        o2.append(_mean_se(f2))
        jt.append(_mean_se(f1 & f2))
    return McOutages(o1, o2, jt)


def ltat_from(out, cfg) -> McEstimate:
    """Renewal-reward ratio with a delta-method standard error."""
    K = cfg.k_max
    x = cfg.r1 * ((out["o1_s1"] > 0) & (out["o1_s1"] <= K)) + cfg.r2 * ((out["o2"] > 0) & (out["o2"] <= K))
    y = out["length"].astype(float)
    n = x.size
    ratio = float(x.sum() / y.sum())
    if n > 1:
        resid = x - ratio * y
        se = float(resid.std(ddof=1) / math.sqrt(n) / y.mean())
    else:
        se = 0.0
    return McEstimate(ratio, se, n)


def estimate_outages(cfg: NetworkConfig, trials: int, seed: int, *, protocol="noma", r_trunc=None) -> McOutages:
    return outages_from(simulate(cfg, trials, seed, protocol=protocol, r_trunc=r_trunc), cfg.k_max)


def estimate_ltat(cfg: NetworkConfig, trials: int, seed: int, *, protocol="noma", r_trunc=None) -> McEstimate:
    return ltat_from(simulate(cfg, trials, seed, protocol=protocol, r_trunc=r_trunc), cfg)


def interference_samples(cfg: NetworkConfig, trials: int, seed: int, r_trunc=None) -> np.ndarray:
    """Per-round interference (trials, k_max, 2) at user 1 and user 2."""
    r = default_r_trunc(cfg) if r_trunc is None else float(r_trunc)
    out = []
    for b in range(-(-trials // BLOCK)):
        blk = _Block(cfg, min(BLOCK, trials - b * BLOCK), int(seed), b, r)
        out.append(np.stack([np.column_stack(blk.interference(j)) for j in range(1, cfg.k_max + 1)], axis=1))
    return np.concatenate(out)
