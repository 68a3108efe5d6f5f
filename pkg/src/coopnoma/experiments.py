"""Declarative experiment specs, the sweep runner and the named presets."""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import analytic, oma, optimize, sim
from .config import InterferenceMode, NetworkConfig, OmaConfig, PhiMode, db_to_linear

CSV_HEADER = ["experiment", "engine", "metric", "param_names", "param_values",
              "value", "std_error", "trials", "seed"]
ENGINES = ("analytic-exact", "analytic-approx", "montecarlo", "both")
KINDS = ("evaluate", "optimize_rates", "optimize_joint", "optimize_ase")
EVAL_METRICS = ("ltat", "expected_rounds", "outage_o1", "outage_o2", "outage_joint",
                "outage_o1_per_round", "outage_o2_per_round", "outage_joint_per_round")
OPT_METRICS = ("objective", "r1", "r2", "beta2", "lam", "outage_o1", "outage_o2", "feasible")
# sweepable keys besides the config fields
EXTRA_KEYS = ("snr_db", "scheme", "eps", "eps1", "eps2")


class SpecError(ValueError):
    """Invalid experiment spec; the message names the offending field."""


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


@dataclass
class ExperimentSpec:
    name: str
    base: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)  # [(key, [values...]), ...]
    engine: str = "analytic-approx"
    kind: str = "evaluate"
    metrics: tuple = ("ltat", "outage_o1", "outage_o2")
    trials: int = 100_000
    seed: int = 1
    outputs: str | None = None
    options: dict = field(default_factory=dict)  # optimizer knobs (grid, r_max, ...)

    def validate(self):
        known = {f.name for f in dataclasses.fields(NetworkConfig)} | set(EXTRA_KEYS)
        for k in self.base:
            if k not in known:
                raise SpecError(f"base.{k}: unknown parameter")
        for i, item in enumerate(self.sweep):
            if len(item) != 2:
                raise SpecError(f"sweep[{i}]: expected [name, values]")
            k, vals = item
            if k not in known:
                raise SpecError(f"sweep[{i}].{k}: unknown parameter")
            if not isinstance(vals, (list, tuple)) or not vals:
                raise SpecError(f"sweep[{i}].{k}: needs a non-empty value list")
        if self.engine not in ENGINES:
            raise SpecError(f"engine: must be one of {', '.join(ENGINES)}")
        if self.kind not in KINDS:
            raise SpecError(f"kind: must be one of {', '.join(KINDS)}")
        allowed = EVAL_METRICS if self.kind == "evaluate" else OPT_METRICS
        for m in self.metrics:
            if m not in allowed:
                raise SpecError(f"metrics: {m!r} not available for kind {self.kind}")
        if self.kind != "evaluate" and self.engine != "analytic-approx":
            raise SpecError("engine: optimizers run on analytic-approx only")
        if self.engine in ("montecarlo", "both") and int(self.trials) < 1:
            raise SpecError("trials: must be >= 1 with a Monte Carlo engine")
        # every sweep point must build a valid config
        for point in self.points():
            try:
                _build(point)
            except (ValueError, TypeError) as exc:
                raise SpecError(f"config at {point}: {exc}") from None
        return self

    def points(self):
        names = [k for k, _ in self.sweep]
        for combo in itertools.product(*[v for _, v in self.sweep]):
            p = dict(self.base)
            p.update(zip(names, combo))
            yield p

    def param_names(self):
        return [k for k, _ in self.sweep]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "name" not in d:
            raise SpecError("name: required")
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise SpecError(f"{sorted(unknown)[0]}: unknown spec key")
        sweep = d.get("sweep") or []
        if isinstance(sweep, dict):
            sweep = list(sweep.items())
        d["sweep"] = [tuple(s) if isinstance(s, (list, tuple)) else s for s in sweep]
        d["metrics"] = tuple(d.get("metrics") or cls.metrics)
        d["base"] = dict(d.get("base") or {})
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        if not isinstance(doc, dict):
            raise SpecError("spec file must hold a mapping")
        return cls.from_dict(doc)

    def override(self, items: dict) -> "ExperimentSpec":
        """Apply ``key=value`` overrides: spec keys, else config keys (replacing any sweep)."""
        spec = copy.deepcopy(self)
        top = {"engine", "trials", "seed", "outputs", "kind", "name"}
        for k, v in items.items():
            if k in top:
                setattr(spec, k, v)
            elif k == "metrics":
                spec.metrics = tuple(v if isinstance(v, list) else [v])
            else:
                spec.sweep = [(n, vals) for n, vals in spec.sweep if n != k]
                spec.base[k] = v
        spec.trials = int(spec.trials)
        spec.seed = int(spec.seed)
        return spec


def _build(point: dict):
    p = dict(point)
    scheme = p.pop("scheme", "noma")
    for k in ("eps", "eps1", "eps2"):
        p.pop(k, None)
    if "snr_db" in p:
        p["p_over_sigma2"] = db_to_linear(float(p.pop("snr_db")))
    if scheme not in ("noma", "oma"):
        raise ValueError(f"scheme must be noma or oma, got {scheme!r}")
    cls = OmaConfig if scheme == "oma" else NetworkConfig
    return scheme, cls(**p)


def _constraints(point):
    e = point.get("eps", 0.01)
    return optimize.OutageConstraints(point.get("eps1", e), point.get("eps2", e))


def _analytic_metrics(scheme, cfg, mode):
    rep = (oma.oma_ltat if scheme == "oma" else analytic.ltat)(cfg, mode)
    s = rep.outages
    return {"ltat": rep.ltat, "expected_rounds": rep.expected_rounds,
            "outage_o1": s.o1[-1], "outage_o2": s.o2[-1], "outage_joint": s.joint[-1],
            "outage_o1_per_round": list(s.o1), "outage_o2_per_round": list(s.o2),
            "outage_joint_per_round": list(s.joint)}


def _mc_metrics(scheme, cfg, trials, seed):
    out = sim.simulate(cfg, trials, seed, protocol=scheme)
    mo = sim.outages_from(out, cfg.k_max)
    return {"ltat": sim.ltat_from(out, cfg), "expected_rounds": sim._mean_se(out["length"]),
            "outage_o1": mo.o1[-1], "outage_o2": mo.o2[-1], "outage_joint": mo.joint[-1],
            "outage_o1_per_round": mo.o1, "outage_o2_per_round": mo.o2,
            "outage_joint_per_round": mo.joint}


def _expand(metric, value):
    """(name, value) pairs; per-round metrics fan out as name[kappa]."""
    if metric.endswith("_per_round"):
        stem = metric[: -len("_per_round")]
        return [(f"{stem}[{i}]", v) for i, v in enumerate(value, start=1)]
    return [(metric, value)]


def _optimize(spec, point, scheme, cfg):
    cons = _constraints(point)
    opts = dict(spec.options)
    if spec.kind == "optimize_rates":
        res = optimize.maximize_ltat_rates(cfg, cons, scheme=scheme, **opts)
    elif spec.kind == "optimize_joint":
        res = optimize.maximize_ltat_joint(cfg, cons, scheme=scheme, **opts)
    else:
        res = optimize.maximize_ase(cfg, cons, scheme=scheme, **opts)
    a = res.argmax
    return {"objective": res.objective, "r1": a.get("r1", math.nan), "r2": a.get("r2", math.nan),
            "beta2": a.get("beta2", math.nan), "lam": a.get("lam", cfg.lam),
            "outage_o1": res.outage1, "outage_o2": res.outage2, "feasible": float(res.feasible)}


def _run_point(args):
    spec, point, in_pool = args
    if in_pool:
        os.environ[sim.WORKERS_ENV] = "1"  # no nested pools inside sweep workers
    scheme, cfg = _build(point)
    names = spec.param_names()
    pn = ";".join(names)
    pv = ";".join(fmt(point[n]) for n in names)
    recs = []

    def add(engine, metric, value, se=None, trials=None, seed=None):
        recs.append({"experiment": spec.name, "engine": engine, "metric": metric,
                     "param_names": pn, "param_values": pv, "value": fmt(value),
                     "std_error": "" if se is None else fmt(se),
                     "trials": "" if trials is None else fmt(trials),
                     "seed": "" if seed is None else fmt(seed)})

    if spec.kind != "evaluate":
        vals = _optimize(spec, point, scheme, cfg)
        for m in spec.metrics:
            add("analytic-approx", m, vals[m])
        return recs, []
    engines = ["analytic-exact", "analytic-approx", "montecarlo"] if spec.engine == "both" else [spec.engine]
    exact = mc = None
    for eng in engines:
        if eng == "montecarlo":
            mc = _mc_metrics(scheme, cfg, spec.trials, spec.seed)
            for m in spec.metrics:
                for name, e in _expand(m, mc[m]):
                    add(eng, name, e.mean, e.std_error, e.trials, spec.seed)
        else:
            mode = PhiMode.EXACT if eng == "analytic-exact" else PhiMode.APPROX
            vals = _analytic_metrics(scheme, cfg, mode)
            if mode is PhiMode.EXACT:
                exact = vals
            for m in spec.metrics:
                for name, v in _expand(m, vals[m]):
                    add(eng, name, v)
    zs = []
    if exact is not None and mc is not None:
        for m in spec.metrics:
            for (_, v), (_, e) in zip(_expand(m, exact[m]), _expand(m, mc[m])):
                if e.std_error > 0:
                    zs.append(abs(v - e.mean) / e.std_error)
    return recs, zs


@dataclass
class RunResult:
    records: list
    max_z: float | None
    points: int


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> RunResult:
    """Evaluate every sweep point in order; one record per (point, engine, metric)."""
    spec.validate()
    if workers is None:
        workers = sim._workers()
    pts = list(spec.points())
    if workers > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_point, [(spec, p, True) for p in pts]))
    else:
        parts = [_run_point((spec, p, False)) for p in pts]
    recs = [r for part, _ in parts for r in part]
    zs = [z for _, part in parts for z in part]
    return RunResult(recs, max(zs) if zs else None, len(pts))


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


def write_outputs(records, path, json_path=None):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(records))
    if json_path:
        with open(json_path, "w") as fh:
            json.dump(records, fh, indent=1)


# ---------------------------------------------------------------------------
# presets; the shared defaults are NetworkConfig's own

_SNR = list(range(0, 65, 5))
_SNR_OPT = list(range(0, 70, 10))
_D = list(range(5, 55, 5))
_MODELS = [m.value for m in InterferenceMode]

PRESETS = {
    "fig3a": dict(sweep=[("k_max", [1, 2, 3, 4]), ("snr_db", _SNR)], engine="both",
                  metrics=["ltat"]),
    "fig3b": dict(sweep=[("k_max", [1, 2, 3, 4]), ("snr_db", _SNR)], engine="both",
                  metrics=["outage_o1", "outage_o2"]),
    "fig4a": dict(base={"k_max": 4}, sweep=[("interference_mode", _MODELS), ("snr_db", _SNR)],
                  engine="both", metrics=["ltat"]),
    "fig4b": dict(base={"k_max": 4}, sweep=[("interference_mode", _MODELS), ("snr_db", _SNR)],
                  engine="both", metrics=["outage_o1", "outage_o2"]),
    "fig5a": dict(base={"snr_db": 30, "k_max": 4},
                  sweep=[("cooperative", [True, False]), ("d_inter", _D)],
                  engine="both", metrics=["ltat"]),
    "fig5b": dict(base={"snr_db": 30, "k_max": 4},
                  sweep=[("cooperative", [True, False]), ("d_inter", _D)],
                  engine="both", metrics=["outage_o1", "outage_o2"]),
    "fig6": dict(kind="optimize_rates", base={"beta2": 0.3, "eps": 0.01},
                 sweep=[("scheme", ["noma", "oma"]), ("k_max", [1, 4]), ("snr_db", _SNR_OPT)],
                 metrics=list(OPT_METRICS)),
    "fig7": dict(kind="optimize_ase", base={"beta2": 0.3},
                 sweep=[("eps", [0.1, 0.01]), ("k_max", [1, 4]), ("snr_db", _SNR_OPT)],
                 metrics=list(OPT_METRICS)),
    "table1": dict(kind="optimize_joint", base={"k_max": 2},
                   sweep=[("eps", [0.1, 0.01]), ("snr_db", [0, 30, 60])],
                   metrics=list(OPT_METRICS)),
}


def preset(name: str) -> ExperimentSpec:
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    d = copy.deepcopy(PRESETS[name])
    d["name"] = name
    d.setdefault("outputs", f"results/{name}.csv")
    return ExperimentSpec.from_dict(d)
