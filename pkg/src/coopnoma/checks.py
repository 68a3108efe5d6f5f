"""Quick self-checks behind ``coopnoma validate``: each returns a CheckResult."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import analytic, sim
from .analytic import OutageSet, PsiArgs
from .config import NetworkConfig, PhiMode
from .specfun import lauricella_fd


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: measured {self.measured:.3g} "
                f"(tolerance {self.tolerance:.3g}, {self.seconds:.2f} s)")


def _timed(name, tol, fn, le=True):
    t0 = time.perf_counter()
    m = float(fn())
    ok = m <= tol if le else m >= tol
    return CheckResult(name, ok, m, tol, time.perf_counter() - t0)


def trivial_identities(cfg: NetworkConfig | None = None) -> CheckResult:
    cfg = cfg or NetworkConfig()

    def worst():
        errs = [
            abs(analytic.psi(PsiArgs((0.7, 2.0), (0, 0), (1.3,), (0,)), cfg) - 1.0),
            abs(analytic.varphi_approx(PsiArgs((0.0, 0.0), (2, 1), (0.0,), (3,)), cfg)),
            abs(analytic.varphi_exact(PsiArgs((0.0,), (2,), (0.0,), (1,)), cfg)),
            abs(lauricella_fd(0.5, (2.0, 1.0), 4.0, (0.0, 0.0)) - 1.0),
        ]
        z = np.zeros(cfg.k_max)
        rep = analytic.report_from_outages(OutageSet(z, z, z), cfg.r1, cfg.r2)
        errs.append(abs(rep.ltat - (cfg.r1 + cfg.r2)))
        return max(errs)

    return _timed("trivial identities", 1e-12, worst)


def coincident_oracle(n=20, seed=0, alpha=None) -> CheckResult:
    """Exact 2-D phi vs the closed form at D = 0, where they coincide."""
    rng = np.random.default_rng(seed)

    def worst():
        rel = 0.0
        for _ in range(n):
            a = float(rng.uniform(2.2, 6.0)) if alpha is None else alpha
            cfg = NetworkConfig(alpha=a, d_inter=0.0)
            m, mh = rng.integers(1, 4), rng.integers(0, 3)
            args = PsiArgs(tuple(rng.uniform(0.01, 50.0, m)), tuple(rng.integers(1, 4, m)),
                           tuple(rng.uniform(0.01, 50.0, mh)), tuple(rng.integers(1, 4, mh)))
            ex = analytic.varphi_exact(args, cfg)
            ap = analytic.varphi_approx(args, cfg)
            rel = max(rel, abs(ex - ap) / abs(ap))
        return rel

    return _timed("coincident-user oracle", 1e-5, worst)


def mc_cross_check(cfg: NetworkConfig | None = None, trials=20_000, seed=11) -> CheckResult:
    """Max |z| between exact analytic outages/LTAT and Monte Carlo at one config."""
    cfg = cfg or NetworkConfig(k_max=2)

    def worst():
        rep = analytic.ltat(cfg, PhiMode.EXACT)
        out = sim.simulate(cfg, trials, seed)
        mo = sim.outages_from(out, cfg.k_max)
        lt = sim.ltat_from(out, cfg)
        pairs = [(rep.ltat, lt)]
        for k in range(cfg.k_max):
            pairs += [(rep.outages.o1[k], mo.o1[k]), (rep.outages.o2[k], mo.o2[k]),
                      (rep.outages.joint[k], mo.joint[k])]
        return max(abs(a - e.mean) / e.std_error for a, e in pairs if e.std_error > 0)

    return _timed("analytic vs Monte Carlo |z|", 3.0, worst)


def run_all(quick=False):
    return [trivial_identities(),
            coincident_oracle(n=5 if quick else 20),
            mc_cross_check(trials=5_000 if quick else 20_000)]
