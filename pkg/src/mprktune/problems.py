"""Benchmark problems in PDRS form.

Training suite: PR4 (xi = 0.4), Robertson, HIRES, NPZD.
Validation suite: PR4 with xi in {0.1, 0.3, 0.5} and the Brusselator.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .pdrs import PDRSProblem, sanitize_initial

__all__ = [
    "pr4_g",
    "pr4_gprime",
    "pr4_lambda",
    "make_pr4",
    "make_robertson",
    "make_hires",
    "make_npzd",
    "make_brusselator",
    "make_problem",
    "PROBLEM_NAMES",
    "training_suite",
    "validation_suite",
]

PR4_T_END = 20.0 * math.pi


@nb.njit(cache=True)
def _pr4_phase(t):
    return 0.5 * math.cos(0.5 * t) * t


@nb.njit(cache=True)
def _pr4_g_scalar(t, out):
    s = math.sin(_pr4_phase(t))
    out[0] = 2.0 + 0.3 * s
    out[1] = 2.0 + s
    out[2] = 1.0 - s
    out[3] = 1.0 - 0.3 * s


@nb.njit(cache=True)
def _pr4_gprime_scalar(t, out):
    # d/dt sin(phi) = cos(phi) * (0.5 cos(0.5 t) - 0.25 t sin(0.5 t))
    ds = math.cos(_pr4_phase(t)) * (0.5 * math.cos(0.5 * t) - 0.25 * t * math.sin(0.5 * t))
    out[0] = 0.3 * ds
    out[1] = ds
    out[2] = -ds
    out[3] = -0.3 * ds


@nb.njit(cache=True)
def _pr4_terms(par, y, t, P, D, rp, rd):
    xi = par[0]
    literal = par[1] != 0.0
    g = np.empty(4)
    gp = np.empty(4)
    _pr4_g_scalar(t, g)
    _pr4_gprime_scalar(t, gp)
    if literal:
        c1 = min(0.0, gp[0])
        c2 = min(0.0, gp[1])
        c3 = min(0.0, gp[2])
        c4 = min(0.0, gp[3])
    else:
        c1 = max(0.0, gp[0])
        c2 = max(0.0, gp[1])
        c3 = max(0.0, gp[2])
        c4 = max(0.0, gp[3])
    P[0, 1] = y[1]
    P[0, 2] = g[0]
    P[0, 3] = xi * (y[2] + g[1]) + c1
    P[1, 0] = g[1]
    P[1, 3] = y[3]
    P[1, 2] = xi * (g[3] + y[0]) + c2
    P[2, 0] = y[0]
    P[2, 3] = g[2]
    P[2, 1] = xi * (g[0] + y[3]) + c3
    P[3, 1] = g[3]
    P[3, 2] = y[2]
    P[3, 0] = xi * (y[1] + g[2]) + c4
    for i in range(4):
        for j in range(4):
            D[j, i] = P[i, j]


def pr4_g(t):
    """Exact PR4 solution g(t); vectorised over ``t``."""
    t = np.asarray(t, dtype=np.float64)
    s = np.sin(0.5 * np.cos(0.5 * t) * t)
    return np.stack([2.0 + 0.3 * s, 2.0 + s, 1.0 - s, 1.0 - 0.3 * s], axis=-1)


def pr4_gprime(t):
    t = np.asarray(t, dtype=np.float64)
    ds = np.cos(0.5 * np.cos(0.5 * t) * t) * (0.5 * np.cos(0.5 * t) - 0.25 * t * np.sin(0.5 * t))
    return np.stack([0.3 * ds, ds, -ds, -0.3 * ds], axis=-1)


def pr4_lambda(xi):
    """Metzler matrix with zero column sums and spectrum {0, -2, -1 +- (1-2xi)i}."""
    return np.array([
        [-1.0, 1.0 - xi, xi, 0.0],
        [xi, -1.0, 0.0, 1.0 - xi],
        [1.0 - xi, 0.0, -1.0, xi],
        [0.0, xi, 1.0 - xi, -1.0],
    ])


def make_pr4(xi=0.4, literal_split=False):
    """Prothero-Robinson type problem y' = Lambda_xi (y - g) + g' on [0, 20 pi].

    The g' contributions are routed as ``max(0, g_i')`` so every production
    term is nonnegative.  ``literal_split=True`` uses ``min(0, g_i')``
    instead; that variant reconstructs the same ODE but its production terms
    turn negative for t > ~21.
    """
    if not 0.0 <= xi <= 0.5:
        raise ValueError("xi must lie in [0, 1/2]")
    name = f"pr4_{xi:g}" + ("_literal" if literal_split else "")
    return PDRSProblem(
        name=name,
        dim=4,
        terms=_pr4_terms,
        y0=pr4_g(0.0),
        t0=0.0,
        t_end=PR4_T_END,
        dt0=1.0,
        params=np.array([xi, 1.0 if literal_split else 0.0]),
        conservative_pds=True,
        description="PR4",
    )


@nb.njit(cache=True)
def _robertson_terms(par, y, t, P, D, rp, rd):
    P[1, 0] = 0.04 * y[0]
    P[0, 1] = 1e4 * y[1] * y[2]
    P[2, 1] = 3e7 * y[1] * y[1]
    D[0, 1] = P[1, 0]
    D[1, 0] = P[0, 1]
    D[1, 2] = P[2, 1]


def make_robertson():
    return PDRSProblem(
        name="robertson",
        dim=3,
        terms=_robertson_terms,
        y0=sanitize_initial([1.0, 0.0, 0.0]),
        t0=0.0,
        t_end=1e8,
        dt0=1e-6,
        conservative_pds=True,
        description="Robertson",
    )


@nb.njit(cache=True)
def _hires_terms(par, y, t, P, D, rp, rd):
    P[0, 1] = 0.43 * y[1]
    P[0, 2] = 8.32 * y[2]
    P[1, 0] = 1.71 * y[0]
    P[2, 3] = 0.43 * y[3]
    P[2, 4] = 0.035 * y[4]
    P[3, 1] = 8.32 * y[1]
    P[3, 2] = 1.71 * y[2]
    P[4, 5] = 0.43 * y[5]
    P[5, 3] = 0.69 * y[3]
    P[5, 4] = 1.71 * y[4]
    P[6, 7] = 280.0 * y[5] * y[7]
    P[7, 6] = 1.81 * y[6]
    for i in range(8):
        for j in range(8):
            D[j, i] = P[i, j]
    rp[0] = 0.0007
    rp[4] = 0.43 * y[6]
    rp[5] = 0.69 * y[6]
    rd[5] = 280.0 * y[5] * y[7]


def make_hires():
    y0 = np.zeros(8)
    y0[0] = 1.0
    y0[7] = 0.0057
    return PDRSProblem(
        name="hires",
        dim=8,
        terms=_hires_terms,
        y0=sanitize_initial(y0),
        t0=0.0,
        t_end=321.8122,
        dt0=0.5e-3,
        conservative_pds=True,
        description="HIRES",
    )


@nb.njit(cache=True)
def _npzd_terms(par, y, t, P, D, rp, rd):
    P[0, 1] = 0.01 * y[1]
    P[0, 2] = 0.01 * y[2]
    P[0, 3] = 0.003 * y[3]
    P[1, 0] = y[0] * y[1] / (0.01 + y[0])
    P[2, 1] = 0.5 * (1.0 - math.exp(-1.21 * y[1] * y[1])) * y[2]
    P[3, 1] = 0.05 * y[1]
    P[3, 2] = 0.02 * y[2]
    for i in range(4):
        for j in range(4):
            D[j, i] = P[i, j]


def make_npzd():
    return PDRSProblem(
        name="npzd",
        dim=4,
        terms=_npzd_terms,
        y0=np.array([8.0, 2.0, 1.0, 4.0]),
        t0=0.0,
        t_end=5.0,
        dt0=1.0,
        conservative_pds=True,
        description="NPZD",
    )


@nb.njit(cache=True)
def _brusselator_terms(par, y, t, P, D, rp, rd):
    k1 = par[0]
    k2 = par[1]
    k3 = par[2]
    k4 = par[3]
    P[2, 1] = k2 * y[1] * y[4]
    P[3, 4] = k4 * y[4]
    P[4, 0] = k1 * y[0]
    P[4, 5] = k3 * y[4] * y[4] * y[5]
    P[5, 4] = k2 * y[1] * y[4]
    for i in range(6):
        for j in range(6):
            D[j, i] = P[i, j]


def make_brusselator(k=(1.0, 1.0, 1.0, 1.0)):
    return PDRSProblem(
        name="brusselator",
        dim=6,
        terms=_brusselator_terms,
        y0=sanitize_initial([10.0, 10.0, 0.0, 0.0, 0.1, 0.1]),
        t0=0.0,
        t_end=10.0,
        dt0=0.1,
        params=np.asarray(k, dtype=np.float64),
        conservative_pds=True,
        description="Brusselator",
    )


PROBLEM_NAMES = ("pr4", "robertson", "hires", "npzd", "brusselator")


def make_problem(selector: str) -> PDRSProblem:
    """Build a problem from ``name`` or ``pr4:<xi>``."""
    name, _, arg = selector.strip().lower().partition(":")
    if name == "pr4":
        return make_pr4(float(arg) if arg else 0.4)
    makers = {
        "robertson": make_robertson,
        "hires": make_hires,
        "npzd": make_npzd,
        "brusselator": make_brusselator,
    }
    if name not in makers or arg:
        raise KeyError(f"unknown problem {selector!r}; valid: {', '.join(PROBLEM_NAMES)}")
    return makers[name]()


def training_suite():
    return [make_pr4(0.4), make_robertson(), make_hires(), make_npzd()]


def validation_suite():
    return [make_pr4(0.1), make_pr4(0.3), make_pr4(0.5), make_brusselator()]
