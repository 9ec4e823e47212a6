"""``mprktune`` command line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Option precedence: command-line flags, then ``--config`` JSON, then defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .bayesopt import cross_compare, tune
from .control import ControllerParams, integrate_adaptive
from .cost import P1, STANDARD_CONTROLLERS, TOL, CostConfig, cost
from .errors import InfeasibleParameterError, MPRKError
from .metrics import err, run_wp
from .problems import PROBLEM_NAMES, make_problem, training_suite, validation_suite
from .reference import DEFAULT_REF_TOL, RefKind, cache_path, generate_reference
from .schemes import DEFAULT_SCHEMES, parse_scheme
from .svg import wp_svg

__all__ = ["main", "build_parser"]

DESK_BUDGET = (100, 100)
FULL_BUDGET = (500, 500)

_DEFAULTS = {
    "problem": "robertson",
    "scheme": DEFAULT_SCHEMES[0],
    "controller": "2,-1,0,-1,1",
    "tol": 1e-4,
    "tols": None,
    "seed": 0,
    "budget": None,
    "s": 1.0,
    "cancel": "all",
    "cache_dir": None,
    "ref_tol": DEFAULT_REF_TOL,
}


class UsageError(Exception):
    pass


def _fmt(x):
    return repr(float(x))


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _opt(args, cfg, name):
    val = getattr(args, name, None)
    if val is not None:
        return val
    return cfg.get(name, _DEFAULTS.get(name))


def _problem(sel):
    try:
        return make_problem(str(sel))
    except KeyError:
        raise UsageError(f"unknown problem {sel!r}; valid names: {', '.join(PROBLEM_NAMES)}")
    except ValueError as exc:
        raise UsageError(str(exc))


def _scheme(sel):
    try:
        return parse_scheme(str(sel))
    except (InfeasibleParameterError, ValueError, KeyError) as exc:
        raise UsageError(f"bad scheme {sel!r}: {exc}")


def _controller(text):
    if isinstance(text, (list, tuple)):
        text = ",".join(str(v) for v in text)
    try:
        return ControllerParams.parse(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad controller {text!r}: {exc}")


def _tol(value):
    try:
        tol = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"bad tolerance {value!r}")
    if not (tol > 0 and math.isfinite(tol)):
        raise UsageError("tolerance must be a positive finite number")
    return tol


def _tols(value):
    if value is None:
        return list(TOL)
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    tols = [_tol(v) for v in value]
    if not tols:
        raise UsageError("tolerance list is empty")
    return tols


def _budget(args, cfg):
    if getattr(args, "full_budget", False):
        return FULL_BUDGET
    b = _opt(args, cfg, "budget")
    if b is None:
        return DESK_BUDGET
    if isinstance(b, str):
        b = b.split(",")
    try:
        n1, n2 = (int(v) for v in b)
    except (TypeError, ValueError):
        raise UsageError("budget must be two integers n1,n2")
    if n1 < 10 or n2 < 0:
        raise UsageError("budget needs n1 >= 10 (initial design) and n2 >= 0")
    return n1, n2


def _wp_rows(points):
    return [p.as_dict() for p in points]


def _write_wp_csv(points, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tol", "err", "S", "R", "total", "aborted"])
    for p in points:
        w.writerow([_fmt(p.tol), _fmt(p.err) if p.finite else "nan", p.S, p.R, p.total,
                    "" if p.aborted is None else p.aborted.value])
    if path:
        Path(path).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def cmd_solve(args, cfg):
    problem = _problem(_opt(args, cfg, "problem"))
    scheme = _scheme(_opt(args, cfg, "scheme"))
    params = _controller(_opt(args, cfg, "controller"))
    tol = _tol(_opt(args, cfg, "tol"))
    rep = integrate_adaptive(problem, scheme, params, tol, record_attempts=True)
    ref = generate_reference(problem, directory=_opt(args, cfg, "cache_dir"))
    if args.csv:
        a = rep.attempts
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *(f"y{i + 1}" for i in range(problem.dim)), "dt", "accepted"])
            w.writerow([_fmt(problem.t0), *map(_fmt, problem.y0), _fmt(0.0), 1])
            for t, dt, acc, y in zip(a["t"], a["dt"], a["accepted"], a["y"]):
                w.writerow([_fmt(t + dt), *map(_fmt, y), _fmt(dt), int(acc)])
    e = err(rep, ref)
    summary = {
        "problem": problem.name,
        "scheme": scheme.selector,
        "controller": list(params.as_tuple()),
        "tol": tol,
        "S": rep.S,
        "R": rep.R,
        "K": rep.K,
        "err": e if math.isfinite(e) else None,
        "aborted": None if rep.aborted is None else rep.aborted.value,
        "positive": rep.positive,
        "t_final": float(rep.times[-1]),
    }
    _dump(summary, args.json)
    return 0


def cmd_wp(args, cfg):
    problem = _problem(_opt(args, cfg, "problem"))
    scheme = _scheme(_opt(args, cfg, "scheme"))
    params = _controller(_opt(args, cfg, "controller"))
    tols = _tols(_opt(args, cfg, "tols"))
    ref = generate_reference(problem, directory=_opt(args, cfg, "cache_dir"))
    points = run_wp(problem, scheme, params, tols, ref=ref)
    _write_wp_csv(points, args.out)
    if args.svg:
        Path(args.svg).write_text(wp_svg({str(params): points},
                                         title=f"{problem.name} {scheme.name}"))
    return 0


def _cost_config(args, cfg):
    s = float(_opt(args, cfg, "s"))
    if not s > 0:
        raise UsageError("s must be positive")
    cancel = _opt(args, cfg, "cancel")
    if cancel not in ("all", "test"):
        raise UsageError("cancel must be 'all' or 'test'")
    return CostConfig(s=s, cancel=cancel)


def _refs(suite, directory):
    return {p.name: generate_reference(p, directory=directory) for p in suite}


def cmd_cost(args, cfg):
    scheme = _scheme(_opt(args, cfg, "scheme"))
    config = _cost_config(args, cfg)
    ctrls = args.controller or cfg.get("controllers") or [_DEFAULTS["controller"]]
    if isinstance(ctrls, str):
        ctrls = [ctrls]
    suite = training_suite()
    refs = _refs(suite, _opt(args, cfg, "cache_dir"))
    out = []
    for text in ctrls:
        params = _controller(text)
        b = cost(params, scheme, suite, config, refs=refs)
        out.append(b.to_dict())
    _dump({"scheme": scheme.selector, "s": config.s, "results": out}, args.out)
    return 0


def cmd_compare_standard(args, cfg):
    sels = args.scheme or cfg.get("schemes") or list(DEFAULT_SCHEMES)
    if isinstance(sels, str):
        sels = [sels]
    schemes = [_scheme(s) for s in sels]
    config = _cost_config(args, cfg)
    suite = training_suite()
    refs = _refs(suite, _opt(args, cfg, "cache_dir"))
    table = []
    for name, params in STANDARD_CONTROLLERS.items():
        row = {"controller": name, "params": list(params.as_tuple()), "costs": {}}
        for sc in schemes:
            b = cost(params, sc, suite, config, refs=refs)
            row["costs"][sc.selector] = {"total": b.total, "below_M": b.total < config.M,
                                         "disqualified": b.disqualified, "inner": b.inner}
        table.append(row)
    _dump({"s": config.s, "M": config.M, "rows": table}, args.out)
    return 0


def cmd_tune(args, cfg):
    scheme = _scheme(_opt(args, cfg, "scheme"))
    seed = int(_opt(args, cfg, "seed"))
    budget = _budget(args, cfg)
    config = _cost_config(args, cfg)
    cache = _opt(args, cfg, "cache_dir")
    suite = training_suite()
    refs = _refs(suite, cache)
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        def log(entry):
            if trace_fh is not None:
                trace_fh.write(entry.to_json() + "\n")
                trace_fh.flush()

        best, best_cost, trace = tune(scheme, suite, budget, seed, config, callback=log, refs=refs)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    result = {
        "scheme": scheme.selector,
        "seed": seed,
        "budget": list(budget),
        "params": list(best.as_tuple()),
        "cost": best_cost,
        "evaluations": trace.consumed,
    }
    if args.cross_compare:
        others = [_scheme(s) for s in DEFAULT_SCHEMES if _scheme(s).selector != scheme.selector]
        result["cross_compare"] = cross_compare({"incumbent": best}, others, suite, config,
                                                refs=refs)["incumbent"]
    if args.validate:
        vdir = Path(args.validate)
        vdir.mkdir(parents=True, exist_ok=True)
        files = []
        for prob in validation_suite():
            ref = generate_reference(prob, directory=cache)
            pts = {"incumbent": run_wp(prob, scheme, best, TOL, ref=ref),
                   "p1": run_wp(prob, scheme, P1, TOL, ref=ref)}
            path = vdir / f"wp_{prob.name}.csv"
            _write_wp_csv(pts["incumbent"], path)
            (vdir / f"wp_{prob.name}.svg").write_text(wp_svg(pts, title=f"{prob.name} {scheme.name}"))
            files.append(path.name)
        result["validation_files"] = files
    _dump(result, args.out)
    return 0


def cmd_reference(args, cfg):
    cache = _opt(args, cfg, "cache_dir")
    ref_tol = _tol(_opt(args, cfg, "ref_tol"))
    if args.all:
        problems = [make_problem(n) for n in PROBLEM_NAMES]
    else:
        problems = [_problem(_opt(args, cfg, "problem"))]
    entries = []
    for prob in problems:
        path = cache_path(prob, ref_tol, cache)
        hit = path.exists()
        try:
            ref = generate_reference(prob, ref_tol, directory=cache, force=args.force)
        except MPRKError as exc:
            print(f"reference generation failed for {prob.name}: {exc}", file=sys.stderr)
            return 1
        entry = {"problem": prob.name, "kind": ref.kind.value}
        if ref.kind is RefKind.TRAJECTORY:
            entry.update(path=str(path), nodes=ref.nodes, cached=hit and not args.force)
        entries.append(entry)
    _dump({"ref_tol": ref_tol, "entries": entries}, args.out)
    return 0


def cmd_schema(args, cfg):
    sys.stdout.write(resources.files("mprktune").joinpath("schema.json").read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mprktune", description="MPRK step-size controller tuning")
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--cache-dir", dest="cache_dir", help="reference cache directory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="one adaptive run")
    s.add_argument("--problem")
    s.add_argument("--scheme")
    s.add_argument("--controller")
    s.add_argument("--tol")
    s.add_argument("--csv", help="trajectory CSV (one row per attempt)")
    s.add_argument("--json", help="summary JSON (default stdout)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("wp", help="work-precision data over a tolerance list")
    w.add_argument("--problem")
    w.add_argument("--scheme")
    w.add_argument("--controller")
    w.add_argument("--tols", help="comma list; default 1e-1..1e-8")
    w.add_argument("--out", help="CSV path (default stdout)")
    w.add_argument("--svg", help="also write an SVG plot")
    w.set_defaults(func=cmd_wp)

    c = sub.add_parser("cost", help="cost of one or more controllers")
    c.add_argument("--scheme")
    c.add_argument("--controller", action="append")
    c.add_argument("--s", type=float)
    c.add_argument("--cancel", choices=("all", "test"))
    c.add_argument("--out")
    c.set_defaults(func=cmd_cost)

    cs = sub.add_parser("compare-standard", help="cost table of the nine standard controllers")
    cs.add_argument("--scheme", action="append")
    cs.add_argument("--s", type=float)
    cs.add_argument("--cancel", choices=("all", "test"))
    cs.add_argument("--out")
    cs.set_defaults(func=cmd_compare_standard)

    t = sub.add_parser("tune", help="Bayesian optimization of the controller")
    t.add_argument("--scheme")
    t.add_argument("--seed", type=int)
    t.add_argument("--budget", help="n1,n2 (default 100,100)")
    t.add_argument("--full-budget", action="store_true", help="use a 500,500 budget")
    t.add_argument("--s", type=float)
    t.add_argument("--cancel", choices=("all", "test"))
    t.add_argument("--trace", help="JSON-lines trace path")
    t.add_argument("--out", help="result JSON (default stdout)")
    t.add_argument("--cross-compare", action="store_true")
    t.add_argument("--validate", metavar="DIR", help="write validation WP files to DIR")
    t.set_defaults(func=cmd_tune)

    r = sub.add_parser("reference", help="generate and cache reference solutions")
    r.add_argument("--problem")
    r.add_argument("--all", action="store_true")
    r.add_argument("--ref-tol", dest="ref_tol")
    r.add_argument("--force", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reference)

    sc = sub.add_parser("schema", help="print the output schema")
    sc.set_defaults(func=cmd_schema)
    return p


def _load_config(path):
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"mprktune: error: {exc}", file=sys.stderr)
        return 2
    except (MPRKError, OSError) as exc:
        print(f"mprktune: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
