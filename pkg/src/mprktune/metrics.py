"""Work-precision metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import Abort, ControllerParams, SolveReport, integrate_adaptive
from .pdrs import PDRSProblem
from .reference import ReferenceSolution, eval_reference, generate_reference
from .schemes import MPRKScheme

__all__ = ["WPPoint", "l2err_rel", "err", "wp_point", "run_wp"]


def l2err_rel(times, states, ref: ReferenceSolution) -> float:
    """Relative L2-in-time error on the given mesh, trapezoidal rule."""
    times = np.asarray(times, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    if len(times) < 2:
        raise ValueError("need at least one step")
    exact = eval_reference(ref, times)
    e2 = np.sum((exact - states) ** 2, axis=1)
    r2 = np.sum(exact ** 2, axis=1)
    half = 0.5 * np.diff(times)
    num = np.sum(half * (e2[:-1] + e2[1:]))
    den = np.sum(half * (r2[:-1] + r2[1:]))
    return float(np.sqrt(num / den))


def err(report: SolveReport, ref: ReferenceSolution) -> float:
    """``l2err_rel`` over the accepted mesh, NaN when nothing was accepted."""
    if report.K == 0:
        return float("nan")
    return l2err_rel(report.times, report.states, ref)


@dataclass(frozen=True)
class WPPoint:
    tol: float
    err: float
    S: int
    R: int
    aborted: Abort | None = None

    @property
    def total(self) -> int:
        return self.S + self.R

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.err))

    def as_dict(self) -> dict:
        return {"tol": self.tol, "err": None if not self.finite else self.err,
                "S": self.S, "R": self.R, "total": self.total,
                "aborted": None if self.aborted is None else self.aborted.value}


def wp_point(report: SolveReport, ref: ReferenceSolution) -> WPPoint:
    return WPPoint(float(report.tol), err(report, ref), report.S, report.R, report.aborted)


def run_wp(problem: PDRSProblem, scheme: MPRKScheme, params: ControllerParams, tols,
           ref: ReferenceSolution | None = None, **kwargs) -> list[WPPoint]:
    """One adaptive run per tolerance, in the order given."""
    ref = generate_reference(problem) if ref is None else ref
    return [wp_point(integrate_adaptive(problem, scheme, params, tol, **kwargs), ref)
            for tol in tols]
