"""Compiled MPRK stepping and adaptive integration.

Everything here is numba ``njit`` code operating on plain arrays.  The
public, documented entry points live in :mod:`mprktune.schemes` and
:mod:`mprktune.control`; those modules convert dataclasses into the flat
argument lists used below.

Scheme family codes: 0 = MPRK22, 1 = MPRK43 (both third-order families).
"""
import math

import numba as nb
import numpy as np

FAM_MPRK22 = 0
FAM_MPRK43 = 1

# step status codes
OK = 0
FAIL_SINGULAR = 1
FAIL_NONFINITE = 2

# abort reasons
ABORT_NONE = 0
ABORT_MAX_ACCEPTED = 1
ABORT_MAX_REJECTED = 2
ABORT_REJECT_RATIO = 3
ABORT_DT_UNDERFLOW = 4

MACHINE_EPS = 2.0 ** -52
PIVOT_MIN = 1e-300
_REALMIN = np.finfo(np.float64).tiny
_HUGE = np.finfo(np.float64).max


@nb.njit(cache=True)
def lu_solve(M, rhs, x):
    """Solve ``M x = rhs`` by Gaussian elimination with partial pivoting.

    ``M`` and ``rhs`` are overwritten.  Returns 0 on success and
    ``FAIL_SINGULAR`` if a pivot magnitude drops below 1e-300.
    """
    n = M.shape[0]
    for k in range(n):
        p = k
        big = abs(M[k, k])
        for i in range(k + 1, n):
            v = abs(M[i, k])
            if v > big:
                big = v
                p = i
        if not big >= PIVOT_MIN:
            return FAIL_SINGULAR
        if p != k:
            for j in range(n):
                tmp = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[p]
            rhs[p] = tmp
        inv = 1.0 / M[k, k]
        for i in range(k + 1, n):
            l = M[i, k] * inv
            if l != 0.0:
                M[i, k] = 0.0
                for j in range(k + 1, n):
                    M[i, j] -= l * M[k, j]
                rhs[i] -= l * rhs[k]
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for j in range(i + 1, n):
            s -= M[i, j] * x[j]
        x[i] = s / M[i, i]
    return OK


@nb.njit(cache=True)
def weighted_pow(a, b, e, out):
    """``out_i = a_i**e * b_i**(1-e)`` evaluated in log space.

    Results are clamped to the positive normal range so a Patankar weight
    denominator can never become 0 or inf through under/overflow.
    """
    for i in range(a.shape[0]):
        v = math.exp(e * math.log(a[i]) + (1.0 - e) * math.log(b[i]))
        if v < _REALMIN:
            v = _REALMIN
        elif v > _HUGE:
            v = _HUGE
        out[i] = v


@nb.njit(cache=True)
def _eval_stage(terms, par, plain, y, t, P, D, rp, rd):
    P[:, :] = 0.0
    D[:, :] = 0.0
    rp[:] = 0.0
    rd[:] = 0.0
    terms(par, y, t, P, D, rp, rd)
    if plain:
        for i in range(rp.shape[0]):
            rp[i] -= rd[i]
            rd[i] = 0.0


@nb.njit(cache=True)
def assemble(w, m, P, D, RP, RD, pwd, yn, dt, M, rhs):
    """Fill the linear system for a stage/update with weights ``w[:m]``.

    ``M_ii = 1 + dt sum_v w_v (rd_i + sum_j d_ij - p_ii) / pwd_i`` and
    ``M_ij = -dt sum_v w_v p_ij / pwd_j``; ``rhs = yn + dt sum_v w_v rp``.
    """
    n = yn.shape[0]
    for i in range(n):
        rhs[i] = yn[i]
        for j in range(n):
            M[i, j] = 0.0
        M[i, i] = 1.0
    for v in range(m):
        wv = w[v] * dt
        if wv == 0.0:
            continue
        for i in range(n):
            rhs[i] += wv * RP[v, i]
            dsum = RD[v, i] - P[v, i, i]
            for j in range(n):
                dsum += D[v, i, j]
                if j != i:
                    M[i, j] -= wv * P[v, i, j] / pwd[j]
            M[i, i] += wv * dsum / pwd[i]


@nb.njit(cache=True)
def _solve_positive(M, rhs, x):
    st = lu_solve(M, rhs, x)
    if st != OK:
        return st
    for i in range(x.shape[0]):
        if not (x[i] > 0.0 and x[i] < np.inf):
            return FAIL_NONFINITE
    return OK


@nb.njit(cache=True)
def step(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
         yn, tn, dt, P, D, RP, RD, M, rhs, pwd, w, stages, y_next, sigma):
    """One MPRK step from ``(tn, yn)``.  Writes ``stages``, ``y_next``, ``sigma``.

    ``pexp`` is 1/p (stage-3 weight exponent, MPRK43 only); ``qexp`` is the
    exponent of the embedded weight: 1/alpha for MPRK22, 1/q for MPRK43.
    """
    n = yn.shape[0]
    s = b.shape[0]
    stages[0, :] = yn
    _eval_stage(terms, par, plain, yn, tn, P[0], D[0], RP[0], RD[0])
    # stage 2, weight denominator y^n
    w[0] = A[1, 0]
    assemble(w, 1, P, D, RP, RD, yn, yn, dt, M, rhs)
    st = _solve_positive(M, rhs, stages[1])
    if st != OK:
        return st
    _eval_stage(terms, par, plain, stages[1], tn + c[1] * dt, P[1], D[1], RP[1], RD[1])
    y2 = stages[1]
    if fam == FAM_MPRK22:
        weighted_pow(y2, yn, qexp, sigma)
    else:
        # stage 3 with pi = y2^(1/p) yn^(1-1/p)
        weighted_pow(y2, yn, pexp, pwd)
        w[0] = A[2, 0]
        w[1] = A[2, 1]
        assemble(w, 2, P, D, RP, RD, pwd, yn, dt, M, rhs)
        st = _solve_positive(M, rhs, stages[2])
        if st != OK:
            return st
        # embedded sigma from the same tables (no extra evaluations)
        weighted_pow(y2, yn, qexp, pwd)
        w[0] = beta1
        w[1] = beta2
        assemble(w, 2, P, D, RP, RD, pwd, yn, dt, M, rhs)
        st = _solve_positive(M, rhs, sigma)
        if st != OK:
            return st
        _eval_stage(terms, par, plain, stages[2], tn + c[2] * dt, P[2], D[2], RP[2], RD[2])
    for v in range(s):
        w[v] = b[v]
    assemble(w, s, P, D, RP, RD, sigma, yn, dt, M, rhs)
    st = _solve_positive(M, rhs, y_next)
    if st != OK:
        return st
    for i in range(n):
        if not (sigma[i] > 0.0 and sigma[i] < np.inf):
            return FAIL_NONFINITE
    return OK


@nb.njit(cache=True)
def alloc_workspace(n, s):
    P = np.zeros((s, n, n))
    D = np.zeros((s, n, n))
    RP = np.zeros((s, n))
    RD = np.zeros((s, n))
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    pwd = np.zeros(n)
    w = np.zeros(s)
    stages = np.zeros((s, n))
    return P, D, RP, RD, M, rhs, pwd, w, stages


@nb.njit(cache=True)
def step_once(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2, yn, tn, dt):
    n = yn.shape[0]
    s = b.shape[0]
    P, D, RP, RD, M, rhs, pwd, w, stages = alloc_workspace(n, s)
    y_next = np.zeros(n)
    sigma = np.zeros(n)
    st = step(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
              yn, tn, dt, P, D, RP, RD, M, rhs, pwd, w, stages, y_next, sigma)
    return st, y_next, sigma, stages


@nb.njit(cache=True)
def weighted_error(y, sig, atol, rtol):
    n = y.shape[0]
    acc = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(sig[i]))
        e = (y[i] - sig[i]) / sc
        acc += e * e
    return math.sqrt(acc / n)


@nb.njit(cache=True)
def limiter(x, kappa):
    return 1.0 + kappa * math.atan((x - 1.0) / kappa)


@nb.njit(cache=True)
def integrate_fixed(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
                    y0, t0, h, nsteps, use_sigma):
    """Constant step size run; returns ``(status, final state)``.

    With ``use_sigma`` the embedded result is propagated instead of y^{n+1}.
    """
    n = y0.shape[0]
    s = b.shape[0]
    P, D, RP, RD, M, rhs, pwd, w, stages = alloc_workspace(n, s)
    y = y0.copy()
    y_next = np.zeros(n)
    sigma = np.zeros(n)
    for k in range(nsteps):
        t = t0 + k * h
        st = step(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
                  y, t, h, P, D, RP, RD, M, rhs, pwd, w, stages, y_next, sigma)
        if st != OK:
            return st, y
        if use_sigma:
            y[:] = sigma
        else:
            y[:] = y_next
    return OK, y


@nb.njit(cache=True)
def _grow2(a, k):
    out = np.empty((2 * a.shape[0], a.shape[1]))
    out[:k] = a[:k]
    return out


@nb.njit(cache=True)
def _grow1(a, k):
    out = np.empty(2 * a.shape[0])
    out[:k] = a[:k]
    return out


@nb.njit(cache=True)
def integrate_adaptive(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
                       y0, t0, t_end, dt0,
                       cb1, cb2, cb3, ca2, ckappa, k, sf, atol, rtol,
                       s_max, r_max, dt_min, shift_on_reject, record_attempts):
    """Adaptive MPRK run with the arctan-limited DSP controller.

    Returns ``(times, states, S, R, reason, att_t, att_dt, att_fac, att_acc,
    att_y)``; the ``att_*`` arrays are empty unless ``record_attempts``.
    """
    n = y0.shape[0]
    s = b.shape[0]
    P, D, RP, RD, M, rhs, pwd, w, stages = alloc_workspace(n, s)
    y_next = np.zeros(n)
    sigma = np.zeros(n)

    cap = 1024
    times = np.empty(cap)
    states = np.empty((cap, n))
    acap = 1024 if record_attempts else 1
    att_t = np.empty(acap)
    att_dt = np.empty(acap)
    att_fac = np.empty(acap)
    att_acc = np.empty(acap)
    att_y = np.empty((acap, n))
    na = 0

    K = 0
    times[0] = t0
    states[0, :] = y0
    y = y0.copy()
    t = t0
    dt = dt0
    dt_prev = dt0
    eps_n = 1.0
    eps_nm1 = 1.0
    S = 0
    R = 0
    reason = ABORT_NONE
    ratio = s_max / r_max
    inv_k = 1.0 / k

    while t < t_end:
        if not dt >= dt_min:
            reason = ABORT_DT_UNDERFLOW
            break
        h = dt
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        st = step(terms, par, plain, fam, A, b, c, pexp, qexp, beta1, beta2,
                  y, t, h, P, D, RP, RD, M, rhs, pwd, w, stages, y_next, sigma)
        accepted = False
        fac = 0.5
        if st == OK:
            err = weighted_error(y_next, sigma, atol, rtol)
            if not math.isfinite(err):
                st = FAIL_NONFINITE
        if st == OK:
            eps_new = 1.0 / max(MACHINE_EPS, err)
            logr = inv_k * (cb1 * math.log(eps_new) + cb2 * math.log(eps_n)
                            + cb3 * math.log(eps_nm1)) - ca2 * math.log(h / dt_prev)
            if logr > 700.0:
                logr = 700.0
            fac = limiter(math.exp(logr), ckappa)
            accepted = fac >= sf
            if accepted or shift_on_reject:
                eps_nm1 = eps_n
                eps_n = eps_new
                dt_prev = h
            dt = fac * h
        else:
            # scheme-level failure: halve and retry
            dt = 0.5 * h
            dt_prev = h

        if record_attempts:
            if na == att_t.shape[0]:
                att_t = _grow1(att_t, na)
                att_dt = _grow1(att_dt, na)
                att_fac = _grow1(att_fac, na)
                att_acc = _grow1(att_acc, na)
                att_y = _grow2(att_y, na)
            att_t[na] = t
            att_dt[na] = h
            att_fac[na] = fac
            att_acc[na] = 1.0 if accepted else 0.0
            if st == OK:
                att_y[na, :] = y_next
            else:
                att_y[na, :] = np.nan
            na += 1

        if accepted:
            S += 1
            t = t_end if last else t + h
            y[:] = y_next
            K += 1
            if K == times.shape[0]:
                times = _grow1(times, K)
                states = _grow2(states, K)
            times[K] = t
            states[K, :] = y
            if S >= s_max and t < t_end:
                reason = ABORT_MAX_ACCEPTED
                break
        else:
            R += 1
            if R >= r_max:
                reason = ABORT_MAX_REJECTED
                break
            if R >= ratio * (S + 1):
                reason = ABORT_REJECT_RATIO
                break

    return (times[:K + 1].copy(), states[:K + 1].copy(), S, R, reason,
            att_t[:na].copy(), att_dt[:na].copy(), att_fac[:na].copy(),
            att_acc[:na].copy(), att_y[:na].copy())


@nb.njit(cache=True)
def rhs_nodes(terms, par, plain, times, states):
    """f(y_k, t_k) for every row of ``states``."""
    K1, n = states.shape
    out = np.empty((K1, n))
    P = np.empty((n, n))
    D = np.empty((n, n))
    rp = np.empty(n)
    rd = np.empty(n)
    for k in range(K1):
        _eval_stage(terms, par, plain, states[k], times[k], P, D, rp, rd)
        for i in range(n):
            acc = rp[i] - rd[i]
            for j in range(n):
                acc += P[i, j] - D[i, j]
            out[k, i] = acc
    return out
