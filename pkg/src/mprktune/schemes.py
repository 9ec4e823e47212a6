"""Butcher tableaux, MPRK scheme parameters and single steps.

Three families are supported:

* ``MPRK22(alpha)``, second order, alpha >= 1/2
* ``MPRK43(alpha, beta)``, third order on the feasible (alpha, beta) region
* ``MPRK43(gamma)``, third order, 3/8 <= gamma <= 3/4

Each step also returns the embedded result ``sigma`` of order k - 1 which
drives step size control.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .errors import InfeasibleParameterError, SingularDenominatorError, SingularSystemError, StepFailure
from .pdrs import PDRSProblem

__all__ = [
    "ButcherTableau",
    "MPRKScheme",
    "StepOutput",
    "ALPHA0",
    "tableau_mprk22",
    "tableau_mprk43_ab",
    "tableau_mprk43_gamma",
    "mprk43_ab_feasible",
    "scheme_params",
    "parse_scheme",
    "assemble_system",
    "solve_mmatrix",
    "mprk_step",
    "mprk_step_compiled",
    "DEFAULT_SCHEMES",
]

_FEAS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("A", "b", "c"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def s(self) -> int:
        return self.b.shape[0]

    def is_explicit(self) -> bool:
        return bool(np.all(np.triu(self.A) == 0.0))

    def is_nonnegative(self) -> bool:
        return bool((self.A >= 0).all() and (self.b >= 0).all() and (self.c >= 0).all())


def tableau_mprk22(alpha: float) -> ButcherTableau:
    if not alpha >= 0.5:
        raise InfeasibleParameterError(f"MPRK22 requires alpha >= 1/2, got {alpha}")
    return ButcherTableau(
        A=[[0.0, 0.0], [alpha, 0.0]],
        b=[1.0 - 1.0 / (2.0 * alpha), 1.0 / (2.0 * alpha)],
        c=[0.0, alpha],
    )


def _alpha0_equation(a):
    return 3.0 * a * (1.0 - a) - (3.0 * a - 2.0) / (6.0 * a - 3.0)


#: boundary where the lower bounds 3a(1-a) and (3a-2)/(6a-3) coincide
ALPHA0 = brentq(_alpha0_equation, 0.8, 0.95, xtol=1e-15)


def mprk43_ab_feasible(alpha: float, beta: float) -> bool:
    """Whether (alpha, beta) lies in the region where the tableau is nonnegative."""
    tol = _FEAS_TOL
    if alpha < 1.0 / 3.0 - tol:
        return False
    if alpha < 2.0 / 3.0:
        lo, hi = 2.0 / 3.0, 3.0 * alpha * (1.0 - alpha)
    elif alpha < ALPHA0:
        lo, hi = 3.0 * alpha * (1.0 - alpha), 2.0 / 3.0
    else:
        lo, hi = (3.0 * alpha - 2.0) / (6.0 * alpha - 3.0), 2.0 / 3.0
    return lo - tol <= beta <= hi + tol


def tableau_mprk43_ab(alpha: float, beta: float) -> ButcherTableau:
    if abs(alpha - 2.0 / 3.0) < 1e-14 or abs(beta - alpha) < 1e-14 or alpha == 0.0 or beta == 0.0:
        raise SingularDenominatorError(f"MPRK43({alpha}, {beta}) has a vanishing denominator")
    if not mprk43_ab_feasible(alpha, beta):
        raise InfeasibleParameterError(f"(alpha, beta) = ({alpha}, {beta}) is outside the feasible region")
    den = alpha * (2.0 - 3.0 * alpha)
    a31 = (3.0 * alpha * beta * (1.0 - alpha) - beta ** 2) / den
    a32 = beta * (beta - alpha) / den
    b1 = 1.0 + (2.0 - 3.0 * (alpha + beta)) / (6.0 * alpha * beta)
    b2 = (3.0 * beta - 2.0) / (6.0 * alpha * (beta - alpha))
    b3 = (2.0 - 3.0 * alpha) / (6.0 * beta * (beta - alpha))
    # clean roundoff on the region boundary
    a31, a32, b1, b2, b3 = (0.0 if -1e-14 < v < 0.0 else v for v in (a31, a32, b1, b2, b3))
    return ButcherTableau(
        A=[[0.0, 0.0, 0.0], [alpha, 0.0, 0.0], [a31, a32, 0.0]],
        b=[b1, b2, b3],
        c=[0.0, alpha, beta],
    )


def tableau_mprk43_gamma(gamma: float) -> ButcherTableau:
    if not 3.0 / 8.0 <= gamma <= 3.0 / 4.0:
        raise InfeasibleParameterError(f"MPRK43(gamma) requires 3/8 <= gamma <= 3/4, got {gamma}")
    two3 = 2.0 / 3.0
    return ButcherTableau(
        A=[[0.0, 0.0, 0.0], [two3, 0.0, 0.0], [two3 - 1.0 / (4.0 * gamma), 1.0 / (4.0 * gamma), 0.0]],
        b=[0.25, 0.75 - gamma, gamma],
        c=[0.0, two3, two3],
    )


@dataclass(frozen=True, eq=False)
class MPRKScheme:
    """An MPRK method with its tableau and Patankar weight exponents.

    For MPRK22 only ``sigma_exponent = 1/alpha`` is used; ``p``, ``q`` and
    the embedded weights are ``None``.
    """

    family: str
    params: tuple
    tableau: ButcherTableau
    order: int
    p: float | None = None
    q: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    sigma_exponent: float = field(default=1.0)

    @property
    def name(self) -> str:
        args = ",".join(f"{v:g}" for v in self.params)
        return f"MPRK{'22' if self.family == 'mprk22' else '43'}({args})"

    @property
    def selector(self) -> str:
        return f"{self.family}:" + ",".join(f"{v:g}" for v in self.params)

    def kernel_args(self):
        """Flat arguments for the compiled kernels."""
        tab = self.tableau
        if self.family == "mprk22":
            return (K.FAM_MPRK22, tab.A, tab.b, tab.c, 1.0, self.sigma_exponent, 0.0, 0.0)
        return (K.FAM_MPRK43, tab.A, tab.b, tab.c, 1.0 / self.p, 1.0 / self.q, self.beta1, self.beta2)

    @classmethod
    def mprk22(cls, alpha=1.0):
        return scheme_params("mprk22", alpha)

    @classmethod
    def mprk43ab(cls, alpha=0.5, beta=0.75):
        return scheme_params("mprk43ab", alpha, beta)

    @classmethod
    def mprk43g(cls, gamma=0.563):
        return scheme_params("mprk43g", gamma)


def scheme_params(family: str, *params) -> MPRKScheme:
    """Build a scheme from its family tag and parameters."""
    family = family.lower()
    params = tuple(float(v) for v in params)
    if family == "mprk22":
        (alpha,) = params or (1.0,)
        tab = tableau_mprk22(alpha)
        return MPRKScheme("mprk22", (alpha,), tab, 2, sigma_exponent=1.0 / alpha)
    if family == "mprk43ab":
        alpha, beta = params = params or (0.5, 0.75)
        tab = tableau_mprk43_ab(alpha, beta)
        p = alpha * (2.0 - 3.0 * alpha) / (2.0 * (beta - alpha))
        q = alpha
    elif family == "mprk43g":
        (gamma,) = params = params or (0.563,)
        tab = tableau_mprk43_gamma(gamma)
        p = 4.0 * gamma / 3.0
        q = 2.0 / 3.0
    else:
        raise InfeasibleParameterError(f"unknown scheme family {family!r}")
    beta2 = 1.0 / (2.0 * q)
    return MPRKScheme(family, params, tab, 3, p=p, q=q,
                      beta1=1.0 - beta2, beta2=beta2)


def parse_scheme(selector: str) -> MPRKScheme:
    """Parse ``mprk22:1``, ``mprk43ab:0.5,0.75`` or ``mprk43g:0.563``."""
    family, _, args = selector.strip().lower().partition(":")
    values = [float(v) for v in args.split(",") if v.strip()] if args else []
    if family in ("mprk43", "mprk43i"):
        family = "mprk43ab"
    elif family == "mprk43ii":
        family = "mprk43g"
    return scheme_params(family, *values)


DEFAULT_SCHEMES = ("mprk22:1", "mprk43ab:0.5,0.75", "mprk43g:0.563")


@dataclass
class StepOutput:
    y_next: np.ndarray
    sigma: np.ndarray
    stages: list


def _weights(scheme: MPRKScheme, stage):
    tab = scheme.tableau
    if stage == "final":
        return tab.b
    if stage == "sigma":
        if scheme.family == "mprk22":
            raise ValueError("MPRK22 has no linear system for sigma")
        return np.array([scheme.beta1, scheme.beta2])
    return tab.A[stage - 1, : stage - 1]


def assemble_system(problem: PDRSProblem, scheme: MPRKScheme, stage, stages, pwd, tn, dt):
    """Linear system ``M y = rhs`` of a stage, of sigma, or of the update.

    ``stage`` is a 1-based stage index (>= 2), ``"sigma"`` or ``"final"``;
    ``stages`` holds y^(1) = y^n, y^(2), ... as needed.  Terms are evaluated
    at ``(stages[v], tn + c_v dt)``.
    """
    pwd = np.asarray(pwd, dtype=np.float64)
    if np.any(~(pwd > 0)):
        raise StepFailure("Patankar weight denominators must be strictly positive")
    weights = _weights(scheme, stage)
    yn = np.asarray(stages[0], dtype=np.float64)
    n = yn.size
    M = np.eye(n)
    rhs = yn.copy()
    c = scheme.tableau.c
    for v, wv in enumerate(weights):
        if wv == 0.0:
            continue
        P, D, rp, rd = problem.evaluate(stages[v], tn + c[v] * dt)
        off = P / pwd[None, :]
        np.fill_diagonal(off, 0.0)
        M -= dt * wv * off
        M[np.diag_indices(n)] += dt * wv * (rd + D.sum(axis=1) - np.diag(P)) / pwd
        rhs += dt * wv * rp
    return M, rhs


def solve_mmatrix(M, rhs):
    """Solve a small dense system by LU with partial pivoting."""
    M = np.array(M, dtype=np.float64, order="C", copy=True)
    b = np.array(rhs, dtype=np.float64, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or b.shape != (M.shape[0],):
        raise ValueError("need a square matrix and a matching right-hand side")
    x = np.zeros_like(b)
    if K.lu_solve(M, b, x) != K.OK:
        raise SingularSystemError("pivot below 1e-300")
    return x


def _wpow(a, b, e):
    out = np.empty_like(a)
    K.weighted_pow(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), float(e), out)
    return out


def _checked(x):
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise StepFailure("non-positive or non-finite stage value")
    return x


def mprk_step(problem: PDRSProblem, scheme: MPRKScheme, y_n, t_n, dt) -> StepOutput:
    """One MPRK step built from :func:`assemble_system` and :func:`solve_mmatrix`.

    Works with any Python ``terms`` evaluator.  It is the readable
    counterpart of the compiled step used by the integrators.
    """
    yn = np.asarray(y_n, dtype=np.float64)
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    _checked(yn)
    if dt == 0:
        return StepOutput(yn.copy(), yn.copy(), [yn.copy() for _ in range(scheme.tableau.s)])
    stages = [yn]
    M, rhs = assemble_system(problem, scheme, 2, stages, yn, t_n, dt)
    stages.append(_checked(solve_mmatrix(M, rhs)))
    y2 = stages[1]
    if scheme.family == "mprk22":
        sigma = _wpow(y2, yn, scheme.sigma_exponent)
    else:
        pi3 = _wpow(y2, yn, 1.0 / scheme.p)
        M, rhs = assemble_system(problem, scheme, 3, stages, pi3, t_n, dt)
        y3 = _checked(solve_mmatrix(M, rhs))
        pis = _wpow(y2, yn, 1.0 / scheme.q)
        M, rhs = assemble_system(problem, scheme, "sigma", stages, pis, t_n, dt)
        sigma = _checked(solve_mmatrix(M, rhs))
        stages.append(y3)
    M, rhs = assemble_system(problem, scheme, "final", stages, sigma, t_n, dt)
    y_next = _checked(solve_mmatrix(M, rhs))
    return StepOutput(y_next, _checked(sigma), stages)


def mprk_step_compiled(problem: PDRSProblem, scheme: MPRKScheme, y_n, t_n, dt) -> StepOutput:
    """Same as :func:`mprk_step` but through the numba kernel (jitted problems only)."""
    plain = problem.split_mode.value == "plain"
    st, y_next, sigma, stages = K.step_once(problem.terms, problem.params, plain,
                                            *scheme.kernel_args(),
                                            np.asarray(y_n, dtype=np.float64), float(t_n), float(dt))
    if st == K.FAIL_SINGULAR:
        raise SingularSystemError("pivot below 1e-300")
    if st != K.OK:
        raise StepFailure("non-positive or non-finite stage value")
    return StepOutput(y_next, sigma, [s.copy() for s in stages])
