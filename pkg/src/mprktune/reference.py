"""Reference solutions with dense output and an on-disk cache.

Numerical references are adaptive MPRK43(0.5, 0.75) runs with the
controller (2, -1, 0, -1, 1) at ``atol = rtol = ref_tol``.  Every accepted
node stores ``(t, y, f(y, t))`` so the trajectory can be evaluated anywhere
by piecewise cubic Hermite interpolation.

Cache files live in ``$MPRKTUNE_CACHE`` (default ``~/.cache/mprktune``)::

    b"MPRKREF1" | uint32 header length | JSON header | float64 rows (LE)

Each row is ``t, y_1..y_N, f_1..f_N``.  A ``.json`` sidecar repeats the
header for inspection.
"""
from __future__ import annotations

import enum
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from filelock import FileLock

from . import _kernels as K
from .control import ControllerParams, integrate_adaptive
from .errors import DomainError, ReferenceGenerationError
from .pdrs import PDRSProblem, SplitMode
from .problems import pr4_g
from .schemes import MPRKScheme

__all__ = [
    "CACHE_ENV",
    "DEFAULT_REF_TOL",
    "RefKind",
    "ReferenceSolution",
    "cache_dir",
    "cache_path",
    "generate_reference",
    "eval_reference",
    "hermite_eval",
    "write_reference",
    "read_reference",
    "clear_memory_cache",
]

CACHE_ENV = "MPRKTUNE_CACHE"
DEFAULT_REF_TOL = 1e-12
MAGIC = b"MPRKREF1"
FORMAT_VERSION = 1

_GENERATOR = {"scheme": "mprk43ab:0.5,0.75", "controller": [2.0, -1.0, 0.0, -1.0, 1.0]}
_MEMORY: dict[str, "ReferenceSolution"] = {}


class RefKind(enum.Enum):
    ANALYTIC = "analytic"
    TRAJECTORY = "trajectory"


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    problem: str
    kind: RefKind
    t0: float
    t_end: float
    ref_tol: float = float("nan")
    evaluator: Callable | None = None
    times: np.ndarray | None = field(default=None, repr=False)
    states: np.ndarray | None = field(default=None, repr=False)
    derivs: np.ndarray | None = field(default=None, repr=False)

    @property
    def nodes(self) -> int:
        return 0 if self.times is None else len(self.times)

    def __call__(self, t):
        return eval_reference(self, t)


def cache_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "mprktune"


def _header_key(problem: PDRSProblem, ref_tol: float) -> dict:
    return {**problem.key, "split": problem.split_mode.value, "ref_tol": float(ref_tol),
            "generator": _GENERATOR, "version": FORMAT_VERSION}


def _digest(key: dict) -> str:
    blob = json.dumps(key, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cache_path(problem: PDRSProblem, ref_tol=DEFAULT_REF_TOL, directory=None) -> Path:
    key = _header_key(problem, ref_tol)
    return cache_dir(directory) / f"{problem.name}-{_digest(key)}.ref"


def _analytic_for(problem: PDRSProblem):
    # y = g solves PR4 exactly for every xi and either production split
    if problem.description == "PR4" and problem.t0 == 0.0:
        return pr4_g
    return None


def write_reference(path: Path, header: dict, times, states, derivs) -> None:
    """Write the binary file atomically plus its JSON sidecar."""
    rows = np.column_stack([times, states, derivs]).astype("<f8", copy=False)
    header = {**header, "N": int(states.shape[1]), "K": int(len(times) - 1)}
    hbytes = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        fh.write(np.ascontiguousarray(rows).tobytes())
    os.replace(tmp, path)
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def read_reference(path: Path):
    """Return ``(header, times, states, derivs)`` from a cache file."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a reference file")
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12:12 + hlen])
    n = header["N"]
    rows = np.frombuffer(data, dtype="<f8", offset=12 + hlen).reshape(-1, 1 + 2 * n)
    rows = rows.astype(np.float64)
    return header, rows[:, 0].copy(), rows[:, 1:1 + n].copy(), rows[:, 1 + n:].copy()


def _node_derivatives(problem: PDRSProblem, times, states):
    if problem.is_jitted:
        return K.rhs_nodes(problem.terms, problem.params,
                           problem.split_mode is SplitMode.PLAIN_REST, times, states)
    return np.array([problem.rhs(y, t) for t, y in zip(times, states)])


def _solve_reference(problem: PDRSProblem, ref_tol: float):
    rep = integrate_adaptive(problem, MPRKScheme.mprk43ab(0.5, 0.75),
                             ControllerParams.from_seq(_GENERATOR["controller"]), ref_tol)
    if not rep.completed:
        raise ReferenceGenerationError(
            f"reference run for {problem.name} aborted ({rep.aborted.value}) "
            f"at t = {rep.times[-1]:.6g} after {rep.S} accepted steps")
    if not rep.positive:
        raise ReferenceGenerationError(f"reference run for {problem.name} lost positivity")
    times = np.ascontiguousarray(rep.times)
    states = np.ascontiguousarray(rep.states)
    return times, states, _node_derivatives(problem, times, states)


def generate_reference(problem: PDRSProblem, ref_tol=DEFAULT_REF_TOL, *, directory=None,
                       use_cache=True, force=False) -> ReferenceSolution:
    """Reference for ``problem``; cached in memory and on disk.

    ``force`` regenerates and overwrites the disk entry.
    """
    exact = _analytic_for(problem)
    if exact is not None:
        return ReferenceSolution(problem.name, RefKind.ANALYTIC, float(problem.t0),
                                 float(problem.t_end), evaluator=exact)
    path = cache_path(problem, ref_tol, directory)
    mkey = str(path)
    if use_cache and not force and mkey in _MEMORY:
        return _MEMORY[mkey]
    header = _header_key(problem, ref_tol)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        with FileLock(str(path) + ".lock"):
            if path.exists() and not force:
                _, times, states, derivs = read_reference(path)
            else:
                times, states, derivs = _solve_reference(problem, ref_tol)
                write_reference(path, header, times, states, derivs)
    else:
        times, states, derivs = _solve_reference(problem, ref_tol)
    ref = ReferenceSolution(problem.name, RefKind.TRAJECTORY, float(problem.t0),
                            float(problem.t_end), float(ref_tol), None, times, states, derivs)
    if use_cache:
        _MEMORY[mkey] = ref
    return ref


def clear_memory_cache() -> None:
    _MEMORY.clear()


def hermite_eval(times, states, derivs, t):
    """Piecewise cubic Hermite interpolant at ``t`` (scalar or 1-D array)."""
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    tq = np.atleast_1d(t)
    idx = np.searchsorted(times, tq, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 2)
    t0, t1 = times[idx], times[idx + 1]
    h = t1 - t0
    s = ((tq - t0) / h)[:, None]
    h = h[:, None]
    y0, y1 = states[idx], states[idx + 1]
    f0, f1 = derivs[idx], derivs[idx + 1]
    s2 = s * s
    s3 = s2 * s
    out = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0
           + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1)
    # snap exact node hits so stored states come back bit-for-bit
    hit0 = (tq == times[idx])
    hit1 = (tq == times[idx + 1])
    out[hit0] = y0[hit0]
    out[hit1] = y1[hit1]
    return out[0] if scalar else out


def eval_reference(ref: ReferenceSolution, t):
    """Reference state(s) at ``t``; raises DomainError outside the span."""
    tq = np.asarray(t, dtype=np.float64)
    if np.any(tq < ref.t0) or np.any(tq > ref.t_end) or not np.all(np.isfinite(tq)):
        raise DomainError(f"t outside reference span [{ref.t0}, {ref.t_end}]")
    if ref.kind is RefKind.ANALYTIC:
        return ref.evaluator(tq)
    return hermite_eval(ref.times, ref.states, ref.derivs, tq)
