"""Closed-form outage probabilities and LTAT of cooperative HARQ-assisted NOMA.

Every probability is an alternating binomial sum of the functional

    Psi(U, tau; Uh, tauh) = exp(-(sigma^2/P)(U.tau + Uh.tauh) - lam * phi(U, tau; Uh, tauh))

where ``U`` collects thresholds seen at user 1 and ``Uh`` those seen at user 2.
The public term functions take a config and return floats; the same term
code also runs vectorised over grids of (r1, r2, beta2, snr, lam) through
:class:`PsiTable`, which is what the optimizers and sweeps use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy import integrate

from .config import InterferenceMode, NetworkConfig, PhiMode
from .specfun import AccuracyError, beta_fn, fd_shift_sum

PHI_RTOL = 1e-9
# thresholds this far below the largest one in a Psi slot are dropped from the
# closed form; their share of phi is below ratio^(2/alpha)
NEGLIGIBLE_RATIO = 1e-60


@dataclass(frozen=True)
class PsiArgs:
    u: tuple = ()
    tau: tuple = ()
    u_hat: tuple = ()
    tau_hat: tuple = ()

    def __post_init__(self):
        for name in ("u", "tau", "u_hat", "tau_hat"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        if len(self.u) != len(self.tau) or len(self.u_hat) != len(self.tau_hat):
            raise ValueError("threshold and weight vectors must have equal length")
        vals = self.u + self.tau + self.u_hat + self.tau_hat
        if any(not (math.isfinite(v) and v >= 0) for v in vals):
            raise ValueError("PsiArgs entries must be finite and non-negative")
        if any(t != int(t) for t in self.tau + self.tau_hat):
            raise ValueError("weights must be integers")

    def merged(self):
        return self.u + self.u_hat, self.tau + self.tau_hat


@dataclass
class OutageSet:
    """Per-horizon outages, index kappa-1 holds horizon kappa."""
    o1: np.ndarray
    o2: np.ndarray
    joint: np.ndarray

    @property
    def k_max(self):
        return len(self.o1)

    def per_round(self):
        return list(zip(self.o1.tolist(), self.o2.tolist(), self.joint.tolist()))


@dataclass
class ThroughputReport:
    ltat: float
    expected_rounds: float
    reward_o1: float
    reward_o2: float
    outages: OutageSet | None = field(default=None, repr=False)
    feasible: bool = True


# ---------------------------------------------------------------------------
# phi: the spatial interference integral


def _unit_phi_coef(alpha):
    """phi for a single threshold of weight 1 is coef * U^(2/alpha)."""
    return math.pi * beta_fn(1.0 - 2.0 / alpha, 1.0 + 2.0 / alpha)


def phi_approx_rows(u, tau, alpha):
    """Vectorised small-D approximation of phi.

    ``u`` has shape (G, m), ``tau`` shape (m,). Entries with u == 0 (or
    tau == 0) drop out. Returns shape (G,).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    tau = np.asarray(tau, dtype=float)
    keep = tau > 0
    u, tau = u[:, keep], tau[keep]
    out = np.zeros(u.shape[0])
    if tau.size == 0:
        return out
    a = 1.0 - 2.0 / alpha
    umax_all = u.max(axis=1, keepdims=True)
    mask = u > NEGLIGIBLE_RATIO * umax_all
    codes = mask @ (1 << np.arange(mask.shape[1]))
    for code in np.unique(codes):
        if code == 0:
            continue
        rows = codes == code
        cols = mask[np.argmax(rows)]
        us = u[np.ix_(rows, cols)]
        ts = tau[cols]
        umax = us.max(axis=1, keepdims=True)
        c = ts.sum() + 1.0
        raw = fd_shift_sum(a, ts, c, us / umax, us * ts)
        out[rows] = math.pi * umax[:, 0] ** (2.0 / alpha - 1.0) * raw
    return out


def _phi_indep_rows(u, tau, alpha):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    tau = np.asarray(tau, dtype=float)
    return _unit_phi_coef(alpha) * (u ** (2.0 / alpha)) @ tau


@lru_cache(maxsize=200_000)
def _phi_exact_cached(u, tau, uh, tauh, alpha, d):
    return _phi_exact(np.array(u), np.array(tau), np.array(uh), np.array(tauh), alpha, d)


def _phi_exact(u, tau, uh, tauh, alpha, d, rtol=PHI_RTOL):
    k1 = (u > 0) & (tau > 0)
    k2 = (uh > 0) & (tauh > 0)
    u, tau, uh, tauh = u[k1], tau[k1], uh[k2], tauh[k2]
    if u.size == 0 and uh.size == 0:
        return 0.0
    # polar coordinates about the midpoint: user 1 at (-d/2, 0), user 2 at (d/2, 0)
    half = d / 2.0
    s_tot = float(u @ tau + uh @ tauh)
    scale = max(d, max(np.max(u, initial=0.0), np.max(uh, initial=0.0)) ** (1.0 / alpha), 1e-3)
    # far field starts where the linearised integrand is accurate to 1e-12
    big_r = half + max(1e3 * scale, (1e12 * s_tot) ** (1.0 / alpha))

    def ring(rho):
        n = 32
        prev = None
        while True:
            th = np.linspace(0.0, math.pi, n + 1)
            c = np.cos(th)
            base = rho * rho + half * half
            d1sq = base + d * rho * c
            d2sq = base - d * rho * c
            s = np.zeros_like(th)
            if u.size:
                s += np.log1p(np.multiply.outer(d1sq ** (-alpha / 2.0), u)) @ tau
            if uh.size:
                s += np.log1p(np.multiply.outer(d2sq ** (-alpha / 2.0), uh)) @ tauh
            f = -np.expm1(-s)
            w = np.full(n + 1, math.pi / n)
            w[0] = w[-1] = math.pi / (2 * n)
            val = 2.0 * rho * float(f @ w)
            if prev is not None and abs(val - prev) <= 1e-12 * abs(val) + 1e-300:
                return val
            if n >= 1 << 15:
                return val
            prev = val
            n *= 2

    pts = [half + scale * 10.0 ** j for j in range(-3, 40)]
    edges = ([0.0, half] if half > 0 else [0.0]) + [p for p in pts if p < big_r] + [big_r]
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        v, e = integrate.quad(ring, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        total += v
        err += e
    # far field: f ~ sum tau U |x|^-alpha, ring-averaged, plus its D^2 correction
    rr = big_r
    tail = 2.0 * math.pi * s_tot * (rr ** (2.0 - alpha) / (alpha - 2.0)
                                    + alpha * d * d / 16.0 * rr ** (-alpha))
    tail_err = tail * (s_tot * (rr - half) ** (-alpha) + (alpha * d / rr) ** 4)
    total += tail
    err += tail_err
    if err > rtol * total:
        raise AccuracyError("exact phi quadrature did not converge", total, err)
    return total


def varphi_exact(args: PsiArgs, cfg: NetworkConfig) -> float:
    """2-D interference integral with user 2 at distance d_inter from user 1."""
    return _phi_exact_cached(args.u, args.tau, args.u_hat, args.tau_hat,
                             float(cfg.alpha), float(cfg.d_inter))


def varphi_approx(args: PsiArgs, cfg: NetworkConfig) -> float:
    """Small-D closed form: both users collapsed onto one location."""
    u, tau = args.merged()
    if not u:
        return 0.0
    return float(phi_approx_rows(np.array([u]), np.array(tau), cfg.alpha)[0])


def psi(args: PsiArgs, cfg: NetworkConfig, phi_mode=PhiMode.APPROX) -> float:
    u, tau = args.merged()
    noise = cfg.noise * float(np.dot(u, tau)) if u else 0.0
    if cfg.lam == 0 or not u:
        phi = 0.0
    elif PhiMode(phi_mode) is PhiMode.EXACT:
        phi = varphi_exact(args, cfg)
    else:
        phi = varphi_approx(args, cfg)
    return math.exp(-noise - cfg.lam * phi)


# ---------------------------------------------------------------------------
# thresholds and the memoised Psi table


def noma_thresholds(cfg: NetworkConfig, r1=None, r2=None, beta2=None) -> dict:
    """Normalised decoding thresholds U, broadcast over array-valued overrides.

    An s2 threshold is +inf when 1 - 2^R2 beta^2 <= 0; a zero rate gives 0.
    """
    a = cfg.alpha
    r1 = np.asarray(cfg.r1 if r1 is None else r1, dtype=float)
    r2 = np.asarray(cfg.r2 if r2 is None else r2, dtype=float)
    b2 = np.asarray(cfg.beta2 if beta2 is None else beta2, dtype=float)
    r1, r2, b2 = np.broadcast_arrays(r1, r2, b2)
    l1 = float(cfg.d1) ** -a
    l2 = float(cfg.d2) ** -a
    g1 = np.expm1(r1 * math.log(2.0))
    g2 = np.expm1(r2 * math.log(2.0))
    den = 1.0 - np.exp2(r2) * b2
    # sub-normal distances and shares overflow to inf, which is the intended limit
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ld = np.float64(cfg.d_inter) ** -a if cfg.d_inter > 0 else np.inf
        s2 = np.where(g2 == 0, 0.0, np.where(den > 0, g2 / den, np.inf))
        s1 = np.where(g1 == 0, 0.0, np.where(b2 > 0, g1 / b2, np.inf))
    out = {
        "u12": s2 / l1,
        "u11": s1 / l1,
        "u1p2": g1 / l1,
        "u2": s2 / l2,
        "u2p2": g2 / (ld + l2) if cfg.cooperative else g2 / l2,
    }
    out["u1max"] = np.maximum(out["u12"], out["u11"])
    out["feasible"] = (g2 == 0) | (den > 0)
    return out


def _canon(items):
    acc = {}
    for sym, t in items:
        if t:
            acc[sym] = acc.get(sym, 0) + t
    return tuple(sorted(acc.items()))


class PsiTable:
    """Memoised Psi over a grid of threshold sets.

    ``thresholds`` maps symbol -> array (common shape S); ``noise`` and
    ``lam`` broadcast against S. ``side`` maps each symbol to the user it is
    measured at (1 or 2), which matters only for the exact phi.
    """

    def __init__(self, thresholds: dict, side: dict, alpha: float, d_inter: float,
                 noise, lam, phi_mode=PhiMode.APPROX,
                 interference=InterferenceMode.CORRELATED):
        syms = [s for s in side if s in thresholds]
        arrs = np.broadcast_arrays(*[np.asarray(thresholds[s], dtype=float) for s in syms])
        self.shape = arrs[0].shape
        self.u = {s: a.reshape(-1) for s, a in zip(syms, arrs)}
        self.side = side
        self.alpha = float(alpha)
        self.d_inter = float(d_inter)
        self.noise = np.asarray(noise, dtype=float)
        self.lam = np.asarray(lam, dtype=float)
        self.phi_mode = PhiMode(phi_mode)
        self.interference = InterferenceMode(interference)
        self.out_shape = np.broadcast_shapes(self.shape, self.noise.shape, self.lam.shape)
        self._phi = {}
        self._psi = {}

    def _phi_for(self, key):
        if key in self._phi:
            return self._phi[key]
        syms = [s for s, _ in key]
        tau = np.array([t for _, t in key], dtype=float)
        u = np.stack([self.u[s] for s in syms], axis=1)
        u = np.where(np.isinf(u), 0.0, u)  # those rows are zeroed in Psi anyway
        if self.interference is InterferenceMode.INDEPENDENT:
            phi = _phi_indep_rows(u, tau, self.alpha)
        elif self.phi_mode is PhiMode.APPROX:
            phi = phi_approx_rows(u, tau, self.alpha)
        else:
            first = np.array([self.side[s] == 1 for s in syms])
            phi = np.empty(u.shape[0])
            t1 = tuple(tau[first].tolist())
            t2 = tuple(tau[~first].tolist())
            for i, row in enumerate(u):
                phi[i] = _phi_exact_cached(tuple(row[first].tolist()), t1,
                                           tuple(row[~first].tolist()), t2,
                                           self.alpha, self.d_inter)
        self._phi[key] = phi
        return phi

    def __call__(self, *items):
        """Psi for (symbol, weight) pairs; weights of repeated symbols add."""
        key = _canon(items)
        hit = self._psi.get(key)
        if hit is not None:
            return hit
        if not key:
            val = np.ones(self.out_shape)
        else:
            load = np.zeros(self.u[key[0][0]].shape)
            dead = np.zeros(load.shape, dtype=bool)
            for s, t in key:
                us = self.u[s]
                inf = np.isinf(us)
                dead |= inf
                load += t * np.where(inf, 0.0, us)
            expo = -self.noise * load.reshape(self.shape)
            if self.interference is not InterferenceMode.NONE and np.any(self.lam > 0):
                expo = expo - self.lam * self._phi_for(key).reshape(self.shape)
            val = np.where(dead.reshape(self.shape), 0.0, np.exp(expo))
            val = np.broadcast_to(val, self.out_shape)
        self._psi[key] = val
        return val


NOMA_SIDES = {"u12": 1, "u11": 1, "u1p2": 1, "u1max": 1, "u2": 2, "u2p2": 2}


def _noma_table(cfg, phi_mode, r1=None, r2=None, beta2=None, noise=None, lam=None):
    thr = noma_thresholds(cfg, r1, r2, beta2)
    table = PsiTable(thr, NOMA_SIDES, cfg.alpha, cfg.d_inter,
                     cfg.noise if noise is None else noise,
                     cfg.lam if lam is None else lam,
                     phi_mode, cfg.interference_mode)
    return table, thr["feasible"]


# ---------------------------------------------------------------------------
# term families; ``ps`` is a PsiTable, results are arrays over its grid


def _sic_and_peer(ps, K, l, k):
    tot = 0.0
    for t1 in range(l):
        for t2 in range(k - l + 1):
            for t3 in range(K - k + 1):
                for t4 in range(k):
                    c = comb(l - 1, t1) * comb(k - l, t2) * comb(K - k, t3) * comb(k - 1, t4)
                    c = -c if (t1 + t2 + t3 + t4) % 2 else c
                    peer = ("u2", t4 + 1)
                    tot = tot + c * (ps(("u12", t1 + 1), ("u11", t2), ("u1p2", t3), peer)
                                     - ps(("u12", t1), ("u11", t2 + 1), ("u1p2", t3), peer))
    return np.maximum(tot, 0.0)


def _no_sic_peer(ps, K, k):
    tot = 0.0
    for t1 in range(K - k + 1):
        for t2 in range(k + 1):
            for t3 in range(k):
                c = comb(K - k, t1) * comb(k, t2) * comb(k - 1, t3)
                c = -c if (t1 + t2 + t3) % 2 else c
                tot = tot + c * ps(("u1p2", t1), ("u12", t2), ("u2", t3 + 1))
    return tot


def _sic_peer_fails(ps, K, l):
    tot = 0.0
    for t1 in range(l):
        for t2 in range(K - l + 1):
            for t3 in range(K + 1):
                c = comb(l - 1, t1) * comb(K - l, t2) * comb(K, t3)
                c = -c if (t1 + t2 + t3) % 2 else c
                tot = tot + c * (ps(("u12", t1 + 1), ("u11", t2), ("u2", t3))
                                 - ps(("u12", t1), ("u11", t2 + 1), ("u2", t3)))
    return np.maximum(tot, 0.0)


def _all_fail(ps, K):
    tot = 0.0
    for t1 in range(K + 1):
        for t2 in range(K + 1):
            c = comb(K, t1) * comb(K, t2)
            c = -c if (t1 + t2) % 2 else c
            tot = tot + c * ps(("u12", t1), ("u2", t2))
    return tot


def _same_round(ps, K, l):
    tot = 0.0
    for t1 in range(l):
        for t2 in range(l + 1):
            for t3 in range(K - l + 1):
                c = comb(l - 1, t1) * comb(l, t2) * comb(K - l, t3)
                c = -c if (t1 + t2 + t3) % 2 else c
                tot = tot + c * ps(("u12", t1), ("u1max", 1), ("u2", t2), ("u2p2", t3))
    return tot


def _diff_round(ps, K, k, l):
    tot = 0.0
    for t1 in range(l):
        for t2 in range(k - l):
            for t3 in range(k + 1):
                for t4 in range(K - k + 1):
                    c = comb(l - 1, t1) * comb(k - l - 1, t2) * comb(k, t3) * comb(K - k, t4)
                    c = -c if (t1 + t2 + t3 + t4) % 2 else c
                    peer = (("u2", t3), ("u2p2", t4))
                    tot = tot + c * (ps(("u12", t1 + 1), ("u11", t2 + 1), *peer)
                                     - ps(("u12", t1), ("u11", t2 + 2), *peer))
    return np.maximum(tot, 0.0)


def _joint_sum(ps, K):
    return sum(_sic_peer_fails(ps, K, l) for l in range(1, K + 1)) + _all_fail(ps, K)


def _o1_sum(ps, K):
    tot = 0.0
    for k in range(1, K + 1):
        for l in range(1, k + 1):
            tot = tot + _sic_and_peer(ps, K, l, k)
        tot = tot + _no_sic_peer(ps, K, k)
    return tot + _joint_sum(ps, K)


def _o2_sum(ps, K):
    tot = 0.0
    for l in range(1, K + 1):
        tot = tot + _same_round(ps, K, l)
        for k in range(l + 1, K + 1):
            tot = tot + _diff_round(ps, K, k, l)
    return tot + _joint_sum(ps, K)


def _clip(p):
    return np.clip(p, 0.0, 1.0)


def _check_round(name, value, lo, hi):
    if int(value) != value or not lo <= value <= hi:
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def _scalar(x):
    return float(np.asarray(x).reshape(-1)[0])


# public single-configuration terms

def term_sic_and_peer_decode(l, k, cfg, phi_mode=PhiMode.APPROX):
    _check_round("l", l, 1, cfg.k_max)
    _check_round("k", k, l, cfg.k_max)
    return _scalar(_sic_and_peer(_noma_table(cfg, phi_mode)[0], cfg.k_max, l, k))


def term_no_sic_peer_decode(k, cfg, phi_mode=PhiMode.APPROX):
    _check_round("k", k, 1, cfg.k_max)
    return _scalar(_no_sic_peer(_noma_table(cfg, phi_mode)[0], cfg.k_max, k))


def term_sic_peer_fails(l, cfg, phi_mode=PhiMode.APPROX):
    _check_round("l", l, 1, cfg.k_max)
    return _scalar(_sic_peer_fails(_noma_table(cfg, phi_mode)[0], cfg.k_max, l))


def term_all_fail(cfg, phi_mode=PhiMode.APPROX):
    return _scalar(_all_fail(_noma_table(cfg, phi_mode)[0], cfg.k_max))


def term_both_at_o1_same_round(l, cfg, phi_mode=PhiMode.APPROX):
    _check_round("l", l, 1, cfg.k_max)
    return _scalar(_same_round(_noma_table(cfg, phi_mode)[0], cfg.k_max, l))


def term_both_at_o1_diff_round(k, l, cfg, phi_mode=PhiMode.APPROX):
    _check_round("l", l, 1, cfg.k_max)
    if not k > l:
        raise ValueError(f"different-round term needs k > l, got k={k}, l={l}")
    _check_round("k", k, l + 1, cfg.k_max)
    return _scalar(_diff_round(_noma_table(cfg, phi_mode)[0], cfg.k_max, k, l))


# ---------------------------------------------------------------------------
# assembly


@dataclass
class GridResult:
    """Outages have shape (K,) + grid; horizon kappa sits at index kappa-1."""
    o1: np.ndarray
    o2: np.ndarray
    joint: np.ndarray
    ltat: np.ndarray
    expected_rounds: np.ndarray
    feasible: np.ndarray


def assemble(o1, o2, joint, r1, r2):
    """LTAT and E(T) from per-horizon outage stacks (leading axis kappa)."""
    K = o1.shape[0]
    leave = 1.0 + sum((o1[k] + o2[k] - joint[k]) for k in range(K - 1))
    leave = np.maximum(leave, 1.0)
    rew1 = r1 * (1.0 - o1[-1])
    rew2 = r2 * (1.0 - o2[-1])
    return (rew1 + rew2) / leave, leave, rew1, rew2


def _outage_stack(ps, K, which):
    fn = {"o1": _o1_sum, "o2": _o2_sum, "joint": _joint_sum}[which]
    return np.stack([_clip(np.broadcast_to(fn(ps, k), ps.out_shape)) for k in range(1, K + 1)])


def evaluate_grid(cfg: NetworkConfig, phi_mode=PhiMode.APPROX, *, r1=None, r2=None,
                  beta2=None, p_over_sigma2=None, lam=None) -> GridResult:
    """Outages and LTAT of the NOMA scheme broadcast over array overrides.

    Rate and power overrides span the threshold grid; SNR and lam broadcast
    on top of it and reuse every phi value.
    """
    noise = None if p_over_sigma2 is None else 1.0 / np.asarray(p_over_sigma2, dtype=float)
    ps, feas = _noma_table(cfg, phi_mode, r1, r2, beta2, noise, lam)
    K = cfg.k_max
    o1 = _outage_stack(ps, K, "o1")
    o2 = _outage_stack(ps, K, "o2")
    j = _outage_stack(ps, K, "joint")
    rr1 = np.asarray(cfg.r1 if r1 is None else r1, dtype=float)
    rr2 = np.asarray(cfg.r2 if r2 is None else r2, dtype=float)
    eta, et, _, _ = assemble(o1, o2, j, rr1, rr2)
    eta = np.broadcast_to(eta, ps.out_shape)
    feas = np.broadcast_to(feas, ps.out_shape)
    return GridResult(o1, o2, j, eta, np.broadcast_to(et, ps.out_shape), feas)


def outage_set(cfg: NetworkConfig, phi_mode=PhiMode.APPROX) -> OutageSet:
    g = evaluate_grid(cfg, phi_mode)
    return OutageSet(g.o1.reshape(-1).copy(), g.o2.reshape(-1).copy(), g.joint.reshape(-1).copy())


def outage_user1(cfg, phi_mode=PhiMode.APPROX):
    """Returns (O_{K,o1}, per-horizon vector)."""
    s = outage_set(cfg, phi_mode)
    return float(s.o1[-1]), s.o1


def outage_user2(cfg, phi_mode=PhiMode.APPROX):
    s = outage_set(cfg, phi_mode)
    return float(s.o2[-1]), s.o2


def outage_joint(cfg, phi_mode=PhiMode.APPROX):
    s = outage_set(cfg, phi_mode)
    return float(s.joint[-1]), s.joint


def report_from_outages(s: OutageSet, r1, r2, feasible=True) -> ThroughputReport:
    eta, et, rew1, rew2 = assemble(s.o1, s.o2, s.joint, r1, r2)
    return ThroughputReport(float(eta), float(et), float(rew1), float(rew2), s, bool(feasible))


def ltat(cfg: NetworkConfig, phi_mode=PhiMode.APPROX) -> ThroughputReport:
    return report_from_outages(outage_set(cfg, phi_mode), cfg.r1, cfg.r2, cfg.noma_feasible)
