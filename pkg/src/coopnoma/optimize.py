"""Grid-and-refine maximizers for LTAT and ASE under per-user outage constraints."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .analytic import evaluate_grid
from .config import NetworkConfig, PhiMode
from .oma import evaluate_grid_oma, phi_k1, success_k1

CONSTRAINT_TOL = 1e-9
TIE_TOL = 1e-12
R_MAX = 8.0
F_MAX = 1.0 - 1e-6  # beta2 = f * 2^-R2 keeps the NOMA cut strict
MAX_ROUNDS = 40
RATE_POWER = 2.0


@dataclass(frozen=True)
class OutageConstraints:
    eps1: float = 0.01
    eps2: float = 0.01

    def __post_init__(self):
        for e in (self.eps1, self.eps2):
            if not 0 < e <= 1:
                raise ValueError(f"outage tolerance must lie in (0, 1], got {e}")


@dataclass
class OptResult:
    objective: float
    argmax: dict
    feasible: bool
    evaluations: int
    outage1: float = math.nan
    outage2: float = math.nan
    history: list = field(default_factory=list, repr=False)


@dataclass
class _Axis:
    name: str
    lo: float
    hi: float
    n: int
    power: float = 1.0  # coarse nodes lo + (hi - lo) t^power, dense near lo when > 1

    def nodes(self):
        t = np.linspace(0.0, 1.0, self.n)
        return self.lo + (self.hi - self.lo) * t ** self.power


def _grid(cfg, scheme, phi_mode, **kw):
    if scheme == "noma":
        return evaluate_grid(cfg, phi_mode, **kw)
    if scheme == "oma":
        return evaluate_grid_oma(cfg, phi_mode, **kw)
    raise ValueError(f"unknown scheme {scheme!r}")


def _search(evaluate, axes, cons, refine, max_rounds=MAX_ROUNDS):
    """Coarse grid, then ``refine`` rounds of a 17-point box shrunk x4 around the incumbent.

    A round whose best point lands on the box edge (away from the domain
    bound) recentres the box at the same size instead of shrinking, so the
    local stage can walk along ridges the coarse grid only grazed.
    ``evaluate`` maps a dict of open-grid coordinate arrays to
    (objective, o1, o2, ok, params) with params a dict of broadcastable arrays
    including 'r1', 'r2' and 'beta2' used for deterministic tie-breaking.
    """
    coords = [a.nodes() for a in axes]
    best = None
    evals = 0
    history = []
    shrinks = 0
    for rnd in range(max_rounds):
        nd = len(coords)
        open_ = {a.name: c.reshape([-1 if i == j else 1 for j in range(nd)])
                 for i, (a, c) in enumerate(zip(axes, coords))}
        obj, o1, o2, ok, params = evaluate(open_)
        shape = np.broadcast_shapes(obj.shape, *[c.shape for c in open_.values()])
        obj = np.broadcast_to(obj, shape)
        evals += obj.size
        feas = (np.broadcast_to(ok, shape)
                & (np.broadcast_to(o1, shape) <= cons.eps1 + CONSTRAINT_TOL)
                & (np.broadcast_to(o2, shape) <= cons.eps2 + CONSTRAINT_TOL)
                & (obj > 0))
        moved = False
        if feas.any():
            top = obj[feas].max()
            cand = np.flatnonzero((feas & (obj >= top - TIE_TOL)).ravel())
            rsum = np.broadcast_to(params["r1"] + params["r2"], shape).ravel()[cand]
            b2 = np.broadcast_to(params["beta2"], shape).ravel()[cand]
            pick = cand[np.lexsort((b2, rsum))[0]]
            idx = np.unravel_index(pick, shape)
            rec = {
                "objective": float(obj.ravel()[pick]),
                "coords": [float(c[i]) for c, i in zip(coords, idx)],
                "params": {k: float(np.broadcast_to(v, shape)[idx]) for k, v in params.items()},
                "o1": float(np.broadcast_to(o1, shape)[idx]),
                "o2": float(np.broadcast_to(o2, shape)[idx]),
            }
            history.append(rec["objective"])
            if best is None or rec["objective"] > best["objective"] + TIE_TOL:
                if rnd > 0:
                    moved = any(len(c) > 1 and i in (0, len(c) - 1) and a.lo < c[i] < a.hi
                                for a, c, i in zip(axes, coords, idx))
                best = rec
        if best is None:
            break
        if rnd == 0:
            # local coarse spacing: the wider gap next to the incumbent
            spacing = []
            for c, i in zip(coords, idx):
                gaps = np.diff(c)[max(i - 1, 0):i + 1] if len(c) > 1 else np.zeros(1)
                spacing.append(float(gaps.max()))
        if moved:
            half = [8.0 * h for h in spacing]  # same box, recentred
        elif shrinks < refine:
            half = [2.0 * h for h in spacing]
            shrinks += 1
        else:
            break
        new = []
        for a, h, x in zip(axes, half, best["coords"]):
            if h == 0:
                new.append(np.array([x]))
                continue
            new.append(np.unique(np.clip(np.linspace(x - h, x + h, 17), a.lo, a.hi)))
        coords = new
        spacing = [h / 8.0 for h in half]
    if best is None:
        return OptResult(math.nan, {}, False, evals, history=history)
    return OptResult(best["objective"], best["params"], True, evals,
                     best["o1"], best["o2"], history)


def _rate_axes(r_max, n):
    # quadratic spacing resolves the small-rate designs of noise-limited regimes
    return [_Axis("r1", 0.0, r_max, n, RATE_POWER), _Axis("r2", 0.0, r_max, n, RATE_POWER)]


def maximize_ltat_rates(cfg: NetworkConfig, constraints: OutageConstraints, *,
                        scheme="noma", r_max=R_MAX, grid=64, refine=6,
                        phi_mode=PhiMode.APPROX) -> OptResult:
    """Maximize LTAT over (r1, r2) with beta2 fixed at ``cfg.beta2``."""

    def evaluate(g):
        res = _grid(cfg, scheme, phi_mode, r1=g["r1"], r2=g["r2"])
        params = {"r1": g["r1"], "r2": g["r2"], "beta2": np.float64(cfg.beta2)}
        return res.ltat, res.o1[-1], res.o2[-1], res.feasible, params

    return _verify(_search(evaluate, _rate_axes(r_max, grid), constraints, refine),
                   cfg, scheme, phi_mode, constraints)


def maximize_ltat_joint(cfg: NetworkConfig, constraints: OutageConstraints, *,
                        scheme="noma", r_max=R_MAX, grid=(32, 32, 16), refine=6,
                        phi_mode=PhiMode.APPROX) -> OptResult:
    """Maximize LTAT over (r1, r2, beta2).

    For NOMA the power split is searched as beta2 = f * 2^-r2, f in [0, 1),
    which maps the feasible region onto a box. OMA searches beta2 in [0, 1].
    """
    nr1, nr2, nb = grid
    fmax = F_MAX if scheme == "noma" else 1.0
    axes = [_Axis("r1", 0.0, r_max, nr1, RATE_POWER), _Axis("r2", 0.0, r_max, nr2, RATE_POWER),
            _Axis("f", 0.0, fmax, nb)]

    def evaluate(g):
        b2 = g["f"] * np.exp2(-g["r2"]) if scheme == "noma" else g["f"]
        res = _grid(cfg, scheme, phi_mode, r1=g["r1"], r2=g["r2"], beta2=b2)
        params = {"r1": g["r1"], "r2": g["r2"], "beta2": b2}
        return res.ltat, res.o1[-1], res.o2[-1], res.feasible, params

    return _verify(_search(evaluate, axes, constraints, refine), cfg, scheme, phi_mode, constraints)


def maximize_ase(cfg: NetworkConfig, constraints: OutageConstraints, *, scheme="noma",
                 r_max=R_MAX, grid=64, refine=4, lam_grid=None,
                 phi_mode=PhiMode.APPROX) -> OptResult:
    """Maximize lam * LTAT over rates and the interferer intensity."""
    if lam_grid is None:
        lam_grid = np.logspace(-7, -2, 40)
    lam_grid = np.asarray(lam_grid, dtype=float)
    loglam = np.log10(lam_grid)
    axes = _rate_axes(r_max, grid) + [_Axis("loglam", loglam.min(), loglam.max(), loglam.size)]

    def evaluate(g):
        lam = 10.0 ** g["loglam"]
        res = _grid(cfg, scheme, phi_mode, r1=g["r1"], r2=g["r2"], lam=lam)
        params = {"r1": g["r1"], "r2": g["r2"], "beta2": np.float64(cfg.beta2), "lam": lam}
        return lam * res.ltat, res.o1[-1], res.o2[-1], res.feasible, params

    out = _search(evaluate, axes, constraints, refine)
    if out.feasible:
        chk = cfg.replace(lam=out.argmax["lam"])
        v = _verify(OptResult(out.objective / out.argmax["lam"], dict(out.argmax), True,
                              out.evaluations, history=out.history),
                    chk, scheme, phi_mode, constraints)
        out.outage1, out.outage2, out.feasible = v.outage1, v.outage2, v.feasible
    return out


def _verify(res: OptResult, cfg, scheme, phi_mode, cons) -> OptResult:
    """Re-evaluate the argmax as a single point and confirm the constraints."""
    if not res.feasible:
        return res
    kw = {k: np.float64(res.argmax[k]) for k in ("r1", "r2", "beta2")}
    g = _grid(cfg, scheme, phi_mode, **kw)
    o1 = float(g.o1[-1].reshape(-1)[0])
    o2 = float(g.o2[-1].reshape(-1)[0])
    res.outage1, res.outage2 = o1, o2
    res.feasible = bool(o1 <= cons.eps1 + CONSTRAINT_TOL and o2 <= cons.eps2 + CONSTRAINT_TOL
                        and bool(g.feasible.reshape(-1)[0]))
    return res


# ---------------------------------------------------------------------------
# K = 1 OMA: per-user decomposition


def _best_normalised_rate(d, cfg, eps, z_hi=64.0):
    """argmax_z z*theta(z) subject to theta(z) >= 1 - eps, with theta decreasing."""
    theta = lambda z: float(success_k1(z, d, cfg))
    if theta(z_hi) >= 1.0 - eps:
        zmax = z_hi
    else:
        zmax = sopt.brentq(lambda z: theta(z) - (1.0 - eps), 0.0, z_hi, xtol=1e-14, rtol=1e-14)
    # phi is unimodal in z (log-concave success times z); scan then polish
    zs = np.linspace(0.0, zmax, 2001)
    vals = phi_k1(zs, d, cfg)
    i = int(np.argmax(vals))
    lo, hi = zs[max(i - 1, 0)], zs[min(i + 1, zs.size - 1)]
    if hi > lo:
        r = sopt.minimize_scalar(lambda z: -float(phi_k1(z, d, cfg)), bounds=(lo, hi),
                                 method="bounded", options={"xatol": 1e-12})
        if -r.fun >= vals[i]:
            return float(r.x), float(-r.fun)
    return float(zs[i]), float(vals[i])


def remark1_closed_form(cfg: NetworkConfig, constraints: OutageConstraints) -> OptResult:
    """Joint rate/power optimum of K = 1 OMA with a common tolerance.

    Each user's share contributes share * z_i theta_i(z_i) with z_i = R_i / share,
    so the objective is a convex combination of the per-user optima and the
    near user's optimum dominates: all resource goes to user 1.
    """
    if cfg.k_max != 1:
        raise ValueError("closed form needs k_max = 1")
    if constraints.eps1 != constraints.eps2:
        raise ValueError("closed form needs eps1 == eps2")
    eps = constraints.eps1
    z1, p1 = _best_normalised_rate(cfg.d1, cfg, eps)
    z2, p2 = _best_normalised_rate(cfg.d2, cfg, eps)
    if p1 <= 0:
        return OptResult(math.nan, {}, False, 0)
    # p1 >= p2 because theta_1 >= theta_2 pointwise when d1 < d2
    beta2 = 1.0
    return OptResult(p1, {"r1": beta2 * z1, "r2": 0.0, "beta2": beta2,
                          "z2": z2, "phi2": p2}, True, 0,
                     1.0 - float(success_k1(z1, cfg.d1, cfg)), 0.0)
