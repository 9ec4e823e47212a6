"""Controller cost function.

For a candidate x and a k-th order scheme::

    C*_s(x) = sum_test psi( sum_tol C_step + C_tol )
    C_step  = k ln(S* + R*) + ln(err / tol)
    C_tol   = max(0, ln(err / (s tol)))
    psi(x)  = arctan(x / 100)^2

Aborted runs have their counters replaced by a penalty count, runs with no
accepted step add a fixed saturating amount, and a work-precision curve that
does not fall steeply enough disqualifies the candidate (+M).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .control import R_MAX, S_MAX, Abort, ControllerParams, integrate_adaptive
from .metrics import WPPoint, wp_point
from .pdrs import REALMIN, PDRSProblem
from .problems import training_suite
from .reference import ReferenceSolution, generate_reference
from .schemes import MPRKScheme

__all__ = [
    "TOL",
    "CostConfig",
    "RunCost",
    "CostBreakdown",
    "psi",
    "c_step",
    "c_tol",
    "slope_ok",
    "slope_check",
    "cost",
    "STANDARD_CONTROLLERS",
    "TUNED_1000",
    "TUNED_2000",
    "P1",
]

TOL = tuple(10.0 ** -j for j in range(1, 9))


@dataclass(frozen=True)
class CostConfig:
    s: float = 1.0
    tols: tuple = TOL
    s_max: int = S_MAX
    r_max: int = R_MAX
    M: float = 10.0
    slope_first: float = -0.35
    slope_rest: float = -0.7
    sentinel_inner: float = 1e3
    #: "all" stops the whole evaluation on a slope violation, "test" only the current test
    cancel: str = "all"
    disqualify: bool = True

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")
        if any(b >= a for a, b in zip(self.tols, self.tols[1:])):
            raise ValueError("tolerances must be strictly decreasing")
        if self.cancel not in ("all", "test"):
            raise ValueError("cancel must be 'all' or 'test'")

    @property
    def penalty(self) -> float:
        return 10.0 * max(self.s_max, self.r_max)


def psi(x):
    return math.atan(x / 100.0) ** 2


def _starred_counts(run, penalty):
    S, R = run.S, run.R
    if run.aborted in (Abort.MAX_ACCEPTED, Abort.DT_UNDERFLOW):
        S = penalty
    elif run.aborted is Abort.MAX_REJECTED:
        R = penalty
    return S, R


def c_step(run, err_value, tol, k, penalty=10.0 * max(S_MAX, R_MAX)) -> float:
    """``run`` is anything with ``S``, ``R`` and ``aborted`` (report or WP point)."""
    S, R = _starred_counts(run, penalty)
    return k * math.log(S + R) + math.log(max(err_value, REALMIN) / tol)


def c_tol(err_value, tol, s=1.0) -> float:
    return max(0.0, math.log(max(err_value, REALMIN) / (s * tol)))


def slope_ok(p: WPPoint, q: WPPoint, bound: float) -> bool:
    """Whether the WP segment p -> q falls with slope below ``bound``."""
    dw = math.log(q.total) - math.log(p.total)
    if dw == 0.0:
        return False
    return (math.log(q.err) - math.log(p.err)) / dw < bound


def slope_check(points, first=-0.35, rest=-0.7):
    """Index of the first offending point (in ``points``) or None.

    Only points with a finite error take part; the first segment gets the
    looser bound.
    """
    finite = [(i, p) for i, p in enumerate(points) if p.finite and p.total > 0]
    for n in range(1, len(finite)):
        bound = first if n == 1 else rest
        if not slope_ok(finite[n - 1][1], finite[n][1], bound):
            return finite[n][0]
    return None


@dataclass
class RunCost:
    test: str
    tol: float
    S: int
    R: int
    err: float | None
    aborted: str | None
    c_step: float | None
    c_tol: float | None
    inner: float


@dataclass
class CostBreakdown:
    scheme: str
    params: tuple
    runs: list = field(default_factory=list)
    inner: dict = field(default_factory=dict)
    psi: dict = field(default_factory=dict)
    disqualified: list = field(default_factory=list)
    total: float = 0.0

    @property
    def is_disqualified(self) -> bool:
        return bool(self.disqualified)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = list(self.params)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _run_cost(test, point: WPPoint, k, config: CostConfig) -> RunCost:
    if not point.finite:
        return RunCost(test, point.tol, point.S, point.R, None,
                       None if point.aborted is None else point.aborted.value,
                       None, None, config.sentinel_inner)
    cs = c_step(point, point.err, point.tol, k, config.penalty)
    ct = c_tol(point.err, point.tol, config.s)
    return RunCost(test, point.tol, point.S, point.R, point.err,
                   None if point.aborted is None else point.aborted.value, cs, ct, cs + ct)


def cost(params: ControllerParams, scheme: MPRKScheme, suite=None, config: CostConfig = None,
         refs=None, on_run=None) -> CostBreakdown:
    """Evaluate C*_s for ``params`` under ``scheme`` on ``suite``.

    ``refs`` maps problem names to references (generated when missing).
    ``on_run(problem, WPPoint)`` is called after every adaptive run.
    """
    config = config or CostConfig()
    suite = training_suite() if suite is None else suite
    refs = dict(refs or {})
    out = CostBreakdown(scheme.name, params.as_tuple())
    k = scheme.order
    for problem in suite:
        ref = refs.get(problem.name) or generate_reference(problem)
        points: list[WPPoint] = []
        inner = 0.0
        stop = False
        for tol in config.tols:
            rep = integrate_adaptive(problem, scheme, params, tol,
                                     s_max=config.s_max, r_max=config.r_max)
            point = wp_point(rep, ref)
            points.append(point)
            if on_run is not None:
                on_run(problem, point)
            rc = _run_cost(problem.name, point, k, config)
            out.runs.append(rc)
            inner += rc.inner
            if config.disqualify and len(points) >= 2:
                bad = slope_check(points, config.slope_first, config.slope_rest)
                if bad is not None:
                    out.disqualified.append({"test": problem.name, "tol": tol})
                    stop = True
                    break
        out.inner[problem.name] = inner
        out.psi[problem.name] = psi(inner)
        if stop and config.cancel == "all":
            break
    out.total = sum(out.psi.values()) + config.M * len(out.disqualified)
    return out


def _ctrl(*vals):
    return ControllerParams(*(float(v) for v in vals[:4]), int(vals[4]))


P1 = _ctrl(2, -1, 0, -1, 1)

#: the nine classical controllers, in table order
STANDARD_CONTROLLERS = {
    "(0.6,-0.2,0,0,1)": _ctrl(0.6, -0.2, 0, 0, 1),
    "(0.7,-0.4,0,0,1)": _ctrl(0.7, -0.4, 0, 0, 1),
    "(1/6,-1/3,0,0,1)": _ctrl(Fraction(1, 6), Fraction(-1, 3), 0, 0, 1),
    "(1/6,1/6,0,0,1)": _ctrl(Fraction(1, 6), Fraction(1, 6), 0, 0, 1),
    "(1,0,0,0,1)": _ctrl(1, 0, 0, 0, 1),
    "(2,-1,0,-1,1)": P1,
    "(0.5,0.5,0,0.5,1)": _ctrl(0.5, 0.5, 0, 0.5, 1),
    "(1/18,1/9,1/18,0,1)": _ctrl(Fraction(1, 18), Fraction(1, 9), Fraction(1, 18), 0, 1),
    "(0.25,0.25,0.25,0,1)": _ctrl(0.25, 0.25, 0.25, 0, 1),
}

#: tuned vectors from a 1000-evaluation run, keyed by scheme selector
TUNED_1000 = {
    "mprk22:1": _ctrl(1.3651, 0.12708, -0.57219, -0.37702, 2),
    "mprk43ab:0.5,0.75": _ctrl(1.1786, -0.47694, -0.027401, -0.71155, 4),
    "mprk43g:0.563": _ctrl(1.2119, 0.023048, -0.12786, -0.56604, 2),
}

#: tuned vectors from a 2000-evaluation run
TUNED_2000 = {
    "mprk22:1": _ctrl(1.951, -0.66961, -0.37409, -0.48842, 2),
    "mprk43ab:0.5,0.75": _ctrl(1.7706, -0.27744, -0.37701, -0.95947, 3),
    "mprk43g:0.563": _ctrl(2.2556, -1.1991, -0.15024, -2.2167, 2),
}
