"""Production-destruction-rest systems (PDRS).

A PDRS has the right-hand side

    y_i' = r^p_i(y, t) - r^d_i(y, t) + sum_j (p_ij(y, t) - d_ij(y, t))

with nonnegative production ``p``, destruction ``d`` and rest parts ``r^p``,
``r^d``.  Problems carry a single evaluator ``terms`` that fills dense
``(N, N)`` production/destruction tables and ``(N,)`` rest vectors in one
call::

    terms(params, y, t, P, D, rp, rd) -> None

The output arrays are zeroed by the caller; the evaluator only writes the
nonzero entries.  When ``terms`` is a numba ``njit`` function the fast
compiled integrators are used, otherwise the pure NumPy path is taken.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EvaluationError

REALMIN = float(np.finfo(np.float64).tiny)

__all__ = [
    "REALMIN",
    "SplitMode",
    "PDRSProblem",
    "split_rhs",
    "sanitize_initial",
    "check_conservative",
]


class SplitMode(enum.Enum):
    #: r^d is weighted by y_i / pi_i like a destruction term
    PATANKAR_REST = "patankar"
    #: use r^p := r^p - r^d and drop r^d (iterates may become negative)
    PLAIN_REST = "plain"


def _is_jitted(fn) -> bool:
    try:
        from numba.core.registry import CPUDispatcher
    except ImportError:  # pragma: no cover
        return False
    return isinstance(fn, CPUDispatcher)


@dataclass(frozen=True, eq=False)
class PDRSProblem:
    """Immutable description of a positive initial value problem in PDRS form."""

    name: str
    dim: int
    terms: Callable
    y0: np.ndarray
    t0: float
    t_end: float
    dt0: float
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    conservative_pds: bool = False
    split_mode: SplitMode = SplitMode.PATANKAR_REST
    description: str = ""

    def __post_init__(self):
        y0 = np.ascontiguousarray(self.y0, dtype=np.float64)
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        if y0.shape != (self.dim,):
            raise ValueError(f"y0 must have shape ({self.dim},), got {y0.shape}")
        if np.any(y0 <= 0) or not np.all(np.isfinite(y0)):
            raise ValueError("y0 must be strictly positive; use sanitize_initial for zeros")
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        y0.setflags(write=False)
        params.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "params", params)

    @property
    def is_jitted(self) -> bool:
        return _is_jitted(self.terms)

    @property
    def key(self) -> dict:
        """Identity used for caching references."""
        return {"name": self.name, "params": [float(v) for v in self.params]}

    def evaluate(self, y, t):
        """Return ``(P, D, rp, rd)`` at ``(y, t)`` as fresh arrays."""
        n = self.dim
        P = np.zeros((n, n))
        D = np.zeros((n, n))
        rp = np.zeros(n)
        rd = np.zeros(n)
        self.terms(self.params, np.asarray(y, dtype=np.float64), float(t), P, D, rp, rd)
        if self.split_mode is SplitMode.PLAIN_REST:
            rp = rp - rd
            rd = np.zeros(n)
        return P, D, rp, rd

    def prod(self, y, t):
        return self.evaluate(y, t)[0]

    def dest(self, y, t):
        return self.evaluate(y, t)[1]

    def rest_p(self, y, t):
        return self.evaluate(y, t)[2]

    def rest_d(self, y, t):
        return self.evaluate(y, t)[3]

    def rhs(self, y, t):
        """Right-hand side f(y, t) reassembled from the split."""
        P, D, rp, rd = self.evaluate(y, t)
        return rp - rd + (P - D).sum(axis=1)

    def with_split(self, mode: SplitMode) -> "PDRSProblem":
        from dataclasses import replace

        return replace(self, split_mode=mode)

    @classmethod
    def from_rhs(cls, f, y0, t0, t_end, dt0, name="custom"):
        """Wrap a plain right-hand side ``f(y, t)`` using a rest-term split.

        ``r^p = max(0, f)`` and ``r^d = -min(0, f)``; no PDS part.  The rest
        destruction is Patankar-weighted so the iterates stay positive.
        """
        y0 = np.asarray(y0, dtype=np.float64)

        def terms(params, y, t, P, D, rp, rd):
            fv = np.asarray(f(y, t), dtype=np.float64)
            bad = ~np.isfinite(fv)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise EvaluationError(i, t, fv[i])
            rp[:] = np.maximum(0.0, fv)
            rd[:] = -np.minimum(0.0, fv)

        return cls(name=name, dim=y0.size, terms=terms, y0=y0, t0=t0, t_end=t_end, dt0=dt0)


def split_rhs(f, y, t):
    """Split ``f(y, t)`` into production/destruction tables.

    All mass goes through column 1: ``p_i1 = max(0, f_i)``,
    ``d_i1 = -min(0, f_i)``.  The pair is generally not conservative.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("split_rhs requires a strictly positive state")
    fv = np.asarray(f(y, t), dtype=np.float64).reshape(-1)
    bad = ~np.isfinite(fv)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError(i, t, fv[i])
    n = fv.size
    p = np.zeros((n, n))
    d = np.zeros((n, n))
    p[:, 0] = np.maximum(0.0, fv)
    d[:, 0] = -np.minimum(0.0, fv)
    return p, d


def sanitize_initial(y0):
    """Replace exact zeros by the smallest positive normal double."""
    y0 = np.array(y0, dtype=np.float64, copy=True).reshape(-1)
    if np.any(y0 < 0) or not np.all(np.isfinite(y0)):
        raise ValueError("initial data must be finite and nonnegative")
    y0[y0 == 0.0] = REALMIN
    return y0


def check_conservative(problem: PDRSProblem, samples):
    """Largest violation of ``p_ij = d_ji`` and ``p_ii = 0`` over ``samples``.

    ``samples`` is an iterable of ``(y, t)`` pairs.  Returns
    ``(is_conservative, max_violation)``; rest terms are ignored.
    """
    worst = 0.0
    for y, t in samples:
        P, D, _, _ = problem.evaluate(y, t)
        worst = max(worst, float(np.max(np.abs(P - D.T))), float(np.max(np.abs(np.diag(P)))))
    return worst == 0.0, worst
