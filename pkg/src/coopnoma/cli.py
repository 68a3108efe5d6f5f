"""Command line driver: ``coopnoma run|validate|preset``.

Exit codes: 0 success, 2 validation failure (bad spec or failed check), 1 other errors.
"""
from __future__ import annotations

import argparse
import sys
import time

import yaml

from . import checks
from .experiments import (PRESETS, ExperimentSpec, SpecError, preset, run_experiment, to_csv,
                          write_outputs)


def _parse_overrides(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise SpecError(f"override {it!r}: expected key=value")
        k, v = it.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _common(p):
    p.add_argument("overrides", nargs="*", help="key=value config or spec overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--engine", choices=["analytic-exact", "analytic-approx", "montecarlo", "both"])
    p.add_argument("--out", help="CSV path (default: the spec's outputs field)")
    p.add_argument("--json", help="optional JSON mirror of the CSV records")


def build_parser():
    ap = argparse.ArgumentParser(prog="coopnoma", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment spec file (YAML)")
    r.add_argument("spec")
    _common(r)
    p = sub.add_parser("preset", help="run a named preset: " + " ".join(PRESETS))
    p.add_argument("name")
    _common(p)
    v = sub.add_parser("validate", help="check a spec file, then run the self-checks")
    v.add_argument("spec", nargs="?")
    v.add_argument("--quick", action="store_true")
    return ap


def _apply_flags(spec: ExperimentSpec, args) -> ExperimentSpec:
    ov = _parse_overrides(args.overrides)
    for k in ("seed", "trials", "engine"):
        if getattr(args, k) is not None:
            ov[k] = getattr(args, k)
    if args.out is not None:
        ov["outputs"] = args.out
    return spec.override(ov)


def _run(spec: ExperimentSpec, json_path):
    t0 = time.perf_counter()
    res = run_experiment(spec)
    if spec.outputs:
        write_outputs(res.records, spec.outputs, json_path)
        dest = spec.outputs
    else:
        sys.stdout.write(to_csv(res.records))
        dest = "stdout"
    msg = f"{spec.name}: {res.points} points, {len(res.records)} records -> {dest}"
    if res.max_z is not None:
        msg += f"; max |z| analytic vs MC = {res.max_z:.2f}"
    msg += f" ({time.perf_counter() - t0:.1f} s)"
    print(msg, file=sys.stderr)


def main(argv=None) -> int:
    ap = build_parser()
    # overrides may follow options, which argparse leaves unparsed
    args, extra = ap.parse_known_args(argv)
    if extra and (args.cmd == "validate" or any(e.startswith("-") or "=" not in e for e in extra)):
        ap.error(f"unrecognized arguments: {' '.join(extra)}")
    if extra:
        args.overrides = list(args.overrides) + extra
    try:
        if args.cmd == "run":
            _run(_apply_flags(ExperimentSpec.load(args.spec), args).validate(), args.json)
        elif args.cmd == "preset":
            _run(_apply_flags(preset(args.name), args).validate(), args.json)
        else:
            if args.spec:
                ExperimentSpec.load(args.spec).validate()
                print(f"PASS spec {args.spec}")
            results = checks.run_all(quick=args.quick)
            for c in results:
                print(c.line())
            return 0 if all(c.passed for c in results) else 2
    except SpecError as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
