"""Beta function and the fourth Lauricella function F_D.

F_D is evaluated through its Euler integral

    F_D(a; b; c; x) = 1/B(a, c-a) * int_0^1 z^(a-1) (1-z)^(c-a-1) prod_i (1 - x_i z)^(-b_i) dz

with a composite rule: Gauss-Jacobi panels at both endpoints absorb the
algebraic singularities, and Gauss-Legendre panels graded geometrically
toward z=1 resolve the boundary layer of width ~(1 - max x_i).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, special

RTOL = 1e-10
ATOL = 1e-10
MAX_LEVELS = 200
_PANEL_NODES = 12
_CHUNK = 2_000_000


class AccuracyError(ArithmeticError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error_bound):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


def beta_fn(a: float, b: float) -> float:
    """Euler Beta function B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"beta_fn needs positive arguments, got ({a}, {b})")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


@dataclass(frozen=True)
class LauricellaArgs:
    a: float
    b: tuple
    c: float
    x: tuple

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if len(self.b) != len(self.x):
            raise ValueError("b and x must have equal length")
        if not (self.a > 0 and self.c > self.a):
            raise ValueError(f"integral representation needs c > a > 0, got a={self.a}, c={self.c}")
        if any(not xi < 1 for xi in self.x):
            raise ValueError("every x_i must be < 1")


@lru_cache(maxsize=None)
def _jacobi(n: int, alpha: float, beta: float):
    t, w = special.roots_jacobi(n, alpha, beta)
    return t, w


@lru_cache(maxsize=None)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=512)
def euler_rule(a: float, p: float, right_levels: int, left_levels: int = 0, n: int = _PANEL_NODES):
    """Nodes z, complements 1-z and log-weights for int_0^1 z^(a-1) (1-z)^p g(z) dz.

    Panels: [0, eL] with Gauss-Jacobi weight z^(a-1), geometric panels toward
    both ends, [1-eR, 1] with Gauss-Jacobi weight (1-z)^p, where
    eL = 2^-(left_levels+1) and eR = 2^-(right_levels+1).
    """
    eL = 0.5 ** (left_levels + 1)
    eR = 0.5 ** (right_levels + 1)
    # interior breakpoints between eL and 1-eR, kept as (z, 1-z) pairs so the
    # panels next to z = 1 stay resolvable below machine epsilon
    left = [(0.5 ** j, 1.0 - 0.5 ** j) for j in range(left_levels + 1, 0, -1)]
    right = [(1.0 - 0.5 ** j, 0.5 ** j) for j in range(2, right_levels + 2)]
    brk = left + right  # eL, ..., 1/2, 3/4, ..., 1-eR
    zs, cs, lws = [], [], []

    t, w = _jacobi(n, 0.0, a - 1.0)
    z = eL * (1.0 + t) / 2.0
    zs.append(z)
    cs.append(1.0 - z)
    lws.append(np.log(w) + a * math.log(eL / 2.0) + p * np.log1p(-z))

    tl, wl = _legendre(n)
    for (lo, clo), (hi, chi) in zip(brk[:-1], brk[1:]):
        width = clo - chi if chi < 0.25 else hi - lo
        z = lo + width * (1.0 + tl) / 2.0
        zc = chi + width * (1.0 - tl) / 2.0
        zs.append(z)
        cs.append(zc)
        lws.append(np.log(wl * width / 2.0) + (a - 1.0) * np.log(z) + p * np.log(zc))

    t, w = _jacobi(n, p, 0.0)
    zc = eR * (1.0 - t) / 2.0
    z = 1.0 - zc
    zs.append(z)
    cs.append(zc)
    lws.append(np.log(w) + (p + 1.0) * math.log(eR / 2.0) + (a - 1.0) * np.log(z))

    out = tuple(np.concatenate(v) for v in (zs, cs, lws))
    for v in out:
        v.setflags(write=False)
    return out


def _levels(y) -> tuple[int, int]:
    """Grading depth for the layers nearest each endpoint, from y = 1 - x."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 1, 0
    gap = float(np.min(y))
    if not gap > 0:
        raise AccuracyError("argument too close to 1", math.nan, math.inf)
    right = 1 if gap >= 0.5 else int(math.ceil(math.log2(1.0 / gap))) + 4
    xneg = 1.0 - float(np.max(y))
    left = 0 if xneg > -1.0 else int(math.ceil(math.log2(-xneg))) + 4
    if right > MAX_LEVELS or left > MAX_LEVELS:
        raise AccuracyError("layer too thin for graded quadrature", math.nan, math.inf)
    return right, left


def _log_factor(z, zc, y):
    """log(1 - x z) written as log((1 - z) + y z), exact near z = 1 even when x ~ 1."""
    return np.log(zc[:, None] + np.multiply.outer(z, y))


def _raw_integral(a, b, c, x, n=_PANEL_NODES):
    b = np.asarray(b, dtype=float)
    y = 1.0 - np.asarray(x, dtype=float)
    right, left = _levels(y)
    z, zc, lw = euler_rule(float(a), float(c - a - 1.0), right, left, n)
    if b.size:
        lg = lw - _log_factor(z, zc, y) @ b
    else:
        lg = lw
    return float(np.exp(lg).sum())


def lauricella_fd(a: float, b: Sequence[float], c: float, x: Sequence[float],
                  rtol: float = RTOL, atol: float = ATOL) -> float:
    """Normalized F_D^(n)(a; b; c; x), equal to 1 when all x_i = 0.

    Raises ValueError outside c > a > 0 or x_i < 1, and AccuracyError when
    two rule orders disagree beyond tolerance and the adaptive fallback
    cannot confirm either.
    """
    args = LauricellaArgs(a, tuple(b), c, tuple(x))
    norm = beta_fn(args.a, args.c - args.a)
    lo = _raw_integral(args.a, args.b, args.c, args.x, _PANEL_NODES) / norm
    hi = _raw_integral(args.a, args.b, args.c, args.x, 2 * _PANEL_NODES) / norm
    err = abs(hi - lo)
    if err <= max(atol, rtol * abs(hi)):
        return hi
    est, bound = _adaptive(args)
    if bound <= max(atol, rtol * abs(est)):
        return est
    raise AccuracyError("F_D quadrature did not converge", est, bound)


def _adaptive(args: LauricellaArgs):
    # QAWS handles the algebraic weight z^(a-1)(1-z)^(c-a-1) exactly
    b = np.asarray(args.b)
    x = np.asarray(args.x)

    def g(z):
        return math.exp(-float(np.log1p(-x * z) @ b)) if b.size else 1.0

    val, err = integrate.quad(g, 0.0, 1.0, weight="alg",
                              wvar=(args.a - 1.0, args.c - args.a - 1.0),
                              epsabs=0.0, epsrel=RTOL, limit=400)
    norm = beta_fn(args.a, args.c - args.a)
    return val / norm, err / norm


def fd_shift_sum(a: float, b, c: float, y, weights, n: int = _PANEL_NODES):
    """Row-wise sum_k weights[:, k] * B(a, c-a) * F_D(a; b + e_k; c; 1 - y[row]).

    Takes the complements ``y = 1 - x`` (shape (G, m), all > 0) so that
    arguments within rounding of 1 stay resolvable; ``b`` has shape (m,).
    This is the batched kernel behind the closed-form interference
    integral: one node set serves every row and all m unit shifts of ``b``.
    """
    b = np.asarray(b, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    right, left = _levels(y)
    z, zc, lw = euler_rule(float(a), float(c - a - 1.0), right, left, n)
    out = np.empty(y.shape[0])
    step = max(1, _CHUNK // max(1, z.size * max(1, b.size)))
    for i in range(0, y.shape[0], step):
        l1 = np.log(zc[None, :, None] + z[None, :, None] * y[i:i + step, None, :])  # (G, nodes, m)
        base = np.exp(lw[None, :] - l1 @ b)
        s = np.einsum("gnm,gm->gn", np.exp(-l1), weights[i:i + step])
        out[i:i + step] = np.einsum("gn,gn->g", base, s)
    return out
