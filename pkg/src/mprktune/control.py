"""Step size control and adaptive integration.

The controller is the DSP form

    dt_{n+1} = L(eps_{n+1}^(b1/k) eps_n^(b2/k) eps_{n-1}^(b3/k)
                 (dt_n / dt_{n-1})^(-a2)) * dt_n,
    L(x) = 1 + kappa2 * arctan((x - 1) / kappa2),

with ``eps = 1 / max(machine eps, w)`` and ``w`` the weighted RMS
difference between the main and the embedded solution.  A step is rejected
when the limited factor drops below the safety value ``sf``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import MPRKError, StepFailure
from .pdrs import PDRSProblem, SplitMode
from .schemes import MPRKScheme, mprk_step

__all__ = [
    "MACHINE_EPS",
    "S_MAX",
    "R_MAX",
    "DT_MIN",
    "SAFETY",
    "Abort",
    "ControllerParams",
    "ControllerState",
    "Decision",
    "SolveReport",
    "weighted_error",
    "epsilon",
    "limiter",
    "dsp_factor",
    "integrate_adaptive",
    "integrate_fixed",
]

MACHINE_EPS = K.MACHINE_EPS
S_MAX = 10 ** 6
R_MAX = 10 ** 4
DT_MIN = 1e-100
SAFETY = 0.81

#: search box for (beta1, beta2, beta3, alpha2) and the limiter gains
DOMAIN_BOUNDS = ((-5.0, 5.0), (-3.0, 3.0), (-2.0, 2.0), (-3.0, 3.0))
KAPPA_CHOICES = (1, 2, 3, 4)


class Abort(enum.Enum):
    MAX_ACCEPTED = "MaxAccepted"
    MAX_REJECTED = "MaxRejected"
    REJECT_RATIO = "RejectRatio"
    DT_UNDERFLOW = "DtUnderflow"


_ABORT_CODES = {
    K.ABORT_MAX_ACCEPTED: Abort.MAX_ACCEPTED,
    K.ABORT_MAX_REJECTED: Abort.MAX_REJECTED,
    K.ABORT_REJECT_RATIO: Abort.REJECT_RATIO,
    K.ABORT_DT_UNDERFLOW: Abort.DT_UNDERFLOW,
}


@dataclass(frozen=True)
class ControllerParams:
    beta1: float
    beta2: float
    beta3: float
    alpha2: float
    kappa2: int
    sf: float = SAFETY

    def __post_init__(self):
        if self.kappa2 <= 0:
            raise ValueError("kappa2 must be positive")

    @classmethod
    def from_seq(cls, values, sf=SAFETY):
        b1, b2, b3, a2, kap = values
        kap_f = float(kap)
        if kap_f != round(kap_f):
            raise ValueError(f"kappa2 must be an integer, got {kap}")
        return cls(float(b1), float(b2), float(b3), float(a2), int(round(kap_f)), sf)

    @classmethod
    def parse(cls, text: str, sf=SAFETY):
        """Parse ``"2,-1,0,-1,1"``; also accepts fractions like ``1/6``."""
        from fractions import Fraction

        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError("controller needs five values b1,b2,b3,a2,kappa2")
        return cls.from_seq([float(Fraction(p)) for p in parts], sf=sf)

    def as_tuple(self):
        return (self.beta1, self.beta2, self.beta3, self.alpha2, self.kappa2)

    def in_domain(self) -> bool:
        vals = self.as_tuple()[:4]
        return all(lo <= v <= hi for v, (lo, hi) in zip(vals, DOMAIN_BOUNDS)) and self.kappa2 in KAPPA_CHOICES

    def __str__(self):
        return ",".join(f"{v:.10g}" for v in self.as_tuple())


def weighted_error(y_next, sigma, atol, rtol) -> float:
    """Weighted RMS norm of ``y_next - sigma``."""
    y = np.asarray(y_next, dtype=np.float64)
    s = np.asarray(sigma, dtype=np.float64)
    if not (atol >= 0 and rtol >= 0 and atol + rtol > 0):
        raise ValueError("tolerances must be nonnegative and not both zero")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(s))):
        raise StepFailure("non-finite solution in error estimate")
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(s))
    return float(np.sqrt(np.mean(((y - s) / scale) ** 2)))


def epsilon(w: float) -> float:
    return 1.0 / max(MACHINE_EPS, w)


def limiter(x, kappa2):
    return 1.0 + kappa2 * np.arctan((x - 1.0) / kappa2)


@dataclass
class ControllerState:
    """Error and step history of one integration.

    ``eps_hist = (eps_{n+1}, eps_n, eps_{n-1})`` where ``eps_{n+1}`` is the
    value of the latest attempt; ``dt_hist = (dt_n, dt_{n-1})``.
    """

    eps_hist: tuple = (1.0, 1.0, 1.0)
    dt_hist: tuple = (1.0, 1.0)
    S: int = 0
    R: int = 0

    @classmethod
    def initial(cls, dt0):
        return cls(eps_hist=(1.0, 1.0, 1.0), dt_hist=(dt0, dt0))


def dsp_factor(state: ControllerState, params: ControllerParams, k: int) -> float:
    """Limited step size factor from the current history."""
    e1, e0, em1 = state.eps_hist
    dt_n, dt_nm1 = state.dt_hist
    logr = (params.beta1 * math.log(e1) + params.beta2 * math.log(e0)
            + params.beta3 * math.log(em1)) / k - params.alpha2 * math.log(dt_n / dt_nm1)
    if math.isnan(logr):
        raise StepFailure("non-finite controller factor")
    raw = math.exp(min(logr, 700.0))
    return float(limiter(raw, params.kappa2))


@dataclass(frozen=True)
class Decision:
    accept: bool
    dt: float
    factor: float


class StepController:
    """Stateful accept/reject logic around :func:`dsp_factor`.

    ``shift_on_reject=False`` keeps the error history of rejected attempts
    out of later factors.
    """

    def __init__(self, params: ControllerParams, k: int, atol: float, rtol: float,
                 dt0: float, shift_on_reject: bool = True):
        self.params = params
        self.k = k
        self.atol = atol
        self.rtol = rtol
        self.shift_on_reject = shift_on_reject
        self.state = ControllerState.initial(dt0)
        # history as seen by the next factor: (eps_n, eps_{n-1}) and dt_{n-1}
        self._eps = (1.0, 1.0)
        self._dt_prev = dt0

    def advance(self, y_next, sigma, dt_n) -> Decision:
        w = weighted_error(y_next, sigma, self.atol, self.rtol)
        eps_new = epsilon(w)
        trial = ControllerState(eps_hist=(eps_new,) + self._eps, dt_hist=(dt_n, self._dt_prev),
                                S=self.state.S, R=self.state.R)
        fac = dsp_factor(trial, self.params, self.k)
        accept = fac >= self.params.sf
        if accept or self.shift_on_reject:
            self._eps = (eps_new, self._eps[0])
            self._dt_prev = dt_n
        self.state = replace(trial, S=trial.S + accept, R=trial.R + (not accept))
        return Decision(accept, fac * dt_n, fac)

    def fail(self, dt_n) -> Decision:
        """Scheme-level failure: count a rejection and halve the step."""
        self._dt_prev = dt_n
        self.state = replace(self.state, R=self.state.R + 1)
        return Decision(False, 0.5 * dt_n, 0.5)


@dataclass
class SolveReport:
    times: np.ndarray
    states: np.ndarray
    S: int
    R: int
    aborted: Abort | None = None
    problem: str = ""
    scheme: str = ""
    tol: float = float("nan")
    attempts: dict | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def total_steps(self) -> int:
        return self.S + self.R

    @property
    def completed(self) -> bool:
        return self.aborted is None

    @property
    def positive(self) -> bool:
        return bool(np.all(self.states > 0))


def _controller_tuple(params: ControllerParams):
    return (float(params.beta1), float(params.beta2), float(params.beta3),
            float(params.alpha2), float(params.kappa2))


def integrate_adaptive(problem: PDRSProblem, scheme: MPRKScheme, params: ControllerParams, tol,
                       *, atol=None, rtol=None, s_max=S_MAX, r_max=R_MAX, dt_min=DT_MIN,
                       shift_on_reject=True, record_attempts=False, backend="auto") -> SolveReport:
    """Adaptive run from ``problem.t0`` to ``problem.t_end``.

    ``atol = rtol = tol`` unless given separately.  Aborts are reported in
    the result, never raised.  ``backend`` is ``"compiled"``, ``"python"``
    or ``"auto"`` (compiled whenever the problem evaluator is jitted).
    """
    atol = tol if atol is None else atol
    rtol = tol if rtol is None else rtol
    if not (tol > 0 and atol >= 0 and rtol >= 0):
        raise ValueError("tolerance must be positive")
    if backend == "auto":
        backend = "compiled" if problem.is_jitted else "python"
    if backend == "compiled":
        out = K.integrate_adaptive(
            problem.terms, problem.params, problem.split_mode is SplitMode.PLAIN_REST,
            *scheme.kernel_args(),
            problem.y0, float(problem.t0), float(problem.t_end), float(problem.dt0),
            *_controller_tuple(params), float(scheme.order), float(params.sf),
            float(atol), float(rtol), float(s_max), float(r_max), float(dt_min),
            bool(shift_on_reject), bool(record_attempts))
        times, states, S, R, code, att_t, att_dt, att_fac, att_acc, att_y = out
        attempts = None
        if record_attempts:
            attempts = {"t": att_t, "dt": att_dt, "factor": att_fac,
                        "accepted": att_acc.astype(bool), "y": att_y}
        return SolveReport(times, states, int(S), int(R), _ABORT_CODES.get(int(code)),
                           problem.name, scheme.name, tol, attempts)
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return _integrate_python(problem, scheme, params, tol, atol, rtol, s_max, r_max, dt_min,
                             shift_on_reject, record_attempts)


def _integrate_python(problem, scheme, params, tol, atol, rtol, s_max, r_max, dt_min,
                      shift_on_reject, record_attempts):
    ctrl = StepController(params, scheme.order, atol, rtol, problem.dt0, shift_on_reject)
    t, t_end = float(problem.t0), float(problem.t_end)
    y = problem.y0.copy()
    dt = float(problem.dt0)
    times, states = [t], [y.copy()]
    log = {"t": [], "dt": [], "factor": [], "accepted": [], "y": []}
    S = R = 0
    aborted = None
    ratio = s_max / r_max
    while t < t_end:
        if not dt >= dt_min:
            aborted = Abort.DT_UNDERFLOW
            break
        h, last = dt, False
        if t + h >= t_end:
            h, last = t_end - t, True
        try:
            out = mprk_step(problem, scheme, y, t, h)
            dec = ctrl.advance(out.y_next, out.sigma, h)
            y_try = out.y_next
        except MPRKError:
            dec = ctrl.fail(h)
            y_try = np.full_like(y, np.nan)
        if record_attempts:
            for key, val in zip(log, (t, h, dec.factor, dec.accept, y_try)):
                log[key].append(val)
        dt = dec.dt
        if dec.accept:
            S += 1
            t = t_end if last else t + h
            y = y_try
            times.append(t)
            states.append(y.copy())
            if S >= s_max and t < t_end:
                aborted = Abort.MAX_ACCEPTED
                break
        else:
            R += 1
            if R >= r_max:
                aborted = Abort.MAX_REJECTED
                break
            if R >= ratio * (S + 1):
                aborted = Abort.REJECT_RATIO
                break
    attempts = None
    if record_attempts:
        attempts = {k: np.asarray(v) for k, v in log.items()}
        attempts["y"] = attempts["y"].reshape(-1, problem.dim)
    return SolveReport(np.asarray(times), np.asarray(states), S, R, aborted,
                       problem.name, scheme.name, tol, attempts)


def integrate_fixed(problem: PDRSProblem, scheme: MPRKScheme, dt, nsteps=None, *, use_sigma=False):
    """Constant step run over the problem span; returns the final state.

    With ``use_sigma`` the embedded (order k - 1) result is propagated.
    """
    span = problem.t_end - problem.t0
    if nsteps is None:
        nsteps = int(round(span / dt))
    if problem.is_jitted:
        st, y = K.integrate_fixed(problem.terms, problem.params,
                                  problem.split_mode is SplitMode.PLAIN_REST,
                                  *scheme.kernel_args(), problem.y0, float(problem.t0),
                                  float(dt), int(nsteps), bool(use_sigma))
        if st != K.OK:
            raise StepFailure(f"fixed-step run failed with status {st}")
        return y
    y = problem.y0.copy()
    for n in range(nsteps):
        out = mprk_step(problem, scheme, y, problem.t0 + n * dt, dt)
        y = out.sigma if use_sigma else out.y_next
    return y
