"""Gaussian-process Bayesian optimization over a mixed domain.

The search space is a box of continuous variables plus one categorical
variable.  Points are encoded as the box mapped to [0, 1]^d followed by a
one-hot block for the category.  The surrogate is a noise-free GP with an
ARD Matern-5/2 kernel whose hyperparameters maximize the marginal
likelihood.  Phase 1 maximizes expected improvement, phase 2 probability of
improvement.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import qmc

from .control import DOMAIN_BOUNDS, KAPPA_CHOICES, ControllerParams

__all__ = [
    "SearchDomain",
    "GPModel",
    "gp_fit",
    "expected_improvement",
    "probability_of_improvement",
    "acquisition",
    "propose_next",
    "initial_design",
    "TraceEntry",
    "TuneTrace",
    "minimize",
    "tune",
    "cross_compare",
    "PI_XI",
    "JITTER",
]

JITTER = 1e-10
PI_XI = 1e-3
_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class SearchDomain:
    bounds: tuple = DOMAIN_BOUNDS
    categories: tuple = KAPPA_CHOICES
    names: tuple = ("beta1", "beta2", "beta3", "alpha2")

    @property
    def n_cont(self) -> int:
        return len(self.bounds)

    @property
    def dim(self) -> int:
        return self.n_cont + len(self.categories)

    @property
    def _lo(self):
        return np.array([b[0] for b in self.bounds], dtype=np.float64)

    @property
    def _width(self):
        return np.array([b[1] - b[0] for b in self.bounds], dtype=np.float64)

    def encode(self, cont, cat) -> np.ndarray:
        u = (np.asarray(cont, dtype=np.float64) - self._lo) / self._width
        onehot = np.zeros(len(self.categories))
        onehot[self.categories.index(cat)] = 1.0
        return np.concatenate([u, onehot])

    def decode(self, v):
        """Return ``(cont, cat, clamped)``; continuous values are clipped into the box."""
        v = np.asarray(v, dtype=np.float64)
        u = v[:self.n_cont]
        clamped = bool(np.any(u < 0.0) or np.any(u > 1.0))
        u = np.clip(u, 0.0, 1.0)
        cont = self._lo + u * self._width
        cat = self.categories[int(np.argmax(v[self.n_cont:]))]
        return cont, cat, clamped

    def from_unit(self, u, cat):
        return self.encode(self._lo + np.clip(u, 0, 1) * self._width, cat)

    def random(self, rng):
        u = rng.random(self.n_cont)
        cat = self.categories[int(rng.integers(len(self.categories)))]
        return self.from_unit(u, cat)

    def encode_params(self, params: ControllerParams) -> np.ndarray:
        return self.encode(params.as_tuple()[:4], params.kappa2)

    def decode_params(self, v) -> ControllerParams:
        cont, cat, _ = self.decode(v)
        return ControllerParams(*(float(c) for c in cont), int(cat))


def _matern52(X1, X2, ls, sf2):
    d = (X1[:, None, :] - X2[None, :, :]) / ls
    r = np.sqrt(np.maximum(np.sum(d * d, axis=-1), 0.0))
    return sf2 * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r), d, r


class GPModel:
    """Noise-free GP posterior with fixed hyperparameters."""

    def __init__(self, X, y, ls, sf2, jitter=JITTER):
        self.X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.y = y
        self.y_mean = float(np.mean(y))
        std = float(np.std(y))
        self.y_std = std if std > 0 else 1.0
        self.ls = np.asarray(ls, dtype=np.float64)
        self.sf2 = float(sf2)
        self.jitter = jitter
        z = (y - self.y_mean) / self.y_std
        K, _, _ = _matern52(self.X, self.X, self.ls, self.sf2)
        self.L, self.jitter_used = _stable_cholesky(K, self.sf2 * jitter)
        self.alpha = _refined_solve(K, self.L, z)

    def predict(self, Xq):
        """Posterior mean and variance in the original target units."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        Ks, _, _ = _matern52(Xq, self.X, self.ls, self.sf2)
        mu = Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        var = np.maximum(self.sf2 - np.sum(v * v, axis=0), 0.0)
        # below the jitter level the variance is roundoff, not uncertainty
        var[var <= 10.0 * self.jitter_used] = 0.0
        return self.y_mean + self.y_std * mu, self.y_std ** 2 * var

    def residual(self) -> float:
        mu, _ = self.predict(self.X)
        return float(np.max(np.abs(mu - self.y)))


def _stable_cholesky(K, jitter):
    n = K.shape[0]
    eye = np.eye(n)
    j = jitter
    for _ in range(8):
        try:
            return cholesky(K + j * eye, lower=True), j
        except np.linalg.LinAlgError:
            j *= 10.0
    raise np.linalg.LinAlgError("covariance matrix not positive definite")


def _refined_solve(K, L, z, tol=1e-10, max_iter=60):
    """Solve ``K a = z`` with the jittered factor as preconditioner.

    Plain ``(K + jI)^{-1} z`` leaves a training residual of ``j a``, which
    for long length scales is far above interpolation accuracy.
    """
    a = cho_solve((L, True), z)
    r = z - K @ a
    res = float(np.max(np.abs(r))) if r.size else 0.0
    for _ in range(max_iter):
        if res <= tol:
            break
        step = a + cho_solve((L, True), r)
        r_new = z - K @ step
        res_new = float(np.max(np.abs(r_new)))
        if not res_new < res:
            break
        a, r, res = step, r_new, res_new
    return a


def _nll_and_grad(theta, X, z, jitter):
    d = X.shape[1]
    ls = np.exp(theta[:d])
    sf2 = math.exp(theta[d])
    n = X.shape[0]
    K, diff, r = _matern52(X, X, ls, sf2)
    try:
        L = cholesky(K + sf2 * jitter * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    a = cho_solve((L, True), z)
    nll = 0.5 * z @ a + np.sum(np.log(np.diag(L))) + 0.5 * n * math.log(2 * math.pi)
    W = cho_solve((L, True), np.eye(n)) - np.outer(a, a)
    base = sf2 * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    grad = np.empty_like(theta)
    for k in range(d):
        grad[k] = 0.5 * np.sum(W * (base * diff[:, :, k] ** 2))
    grad[d] = 0.5 * np.sum(W * (K + sf2 * jitter * np.eye(n)))
    return float(nll), grad


def gp_fit(X, y, rng=None, restarts=8, ls_bounds=(0.05, 10.0), sf2_bounds=(1e-4, 1e4),
           jitter=JITTER) -> GPModel:
    """Fit hyperparameters by multi-start L-BFGS-B on the marginal likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("need at least two points")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    _, idx, inv = np.unique(X, axis=0, return_index=True, return_inverse=True)
    if len(idx) < X.shape[0]:
        inv = np.asarray(inv).reshape(-1)
        for g in range(len(idx)):
            if np.ptp(y[inv == g]) > 0:
                raise ValueError("duplicate inputs with conflicting targets")
        keep = np.sort(idx)
        X, y = X[keep], y[keep]
    rng = np.random.default_rng(0) if rng is None else rng
    d = X.shape[1]
    std = float(np.std(y)) or 1.0
    z = (y - np.mean(y)) / std
    lo = np.r_[np.full(d, math.log(ls_bounds[0])), math.log(sf2_bounds[0])]
    hi = np.r_[np.full(d, math.log(ls_bounds[1])), math.log(sf2_bounds[1])]
    starts = [np.r_[np.zeros(d), 0.0]]
    starts += [lo + rng.random(d + 1) * (hi - lo) for _ in range(restarts - 1)]
    best = None
    for th0 in starts:
        res = optimize.minimize(_nll_and_grad, th0, args=(X, z, jitter), jac=True,
                                method="L-BFGS-B", bounds=list(zip(lo, hi)))
        if best is None or res.fun < best.fun:
            best = res
    th = best.x
    return GPModel(X, y, np.exp(th[:d]), math.exp(th[d]), jitter)


def expected_improvement(model: GPModel, Xq, incumbent):
    mu, var = model.predict(Xq)
    sd = np.sqrt(var)
    gain = incumbent - mu
    out = np.maximum(gain, 0.0)
    pos = sd > 0
    zz = gain[pos] / sd[pos]
    out[pos] = gain[pos] * stats.norm.cdf(zz) + sd[pos] * stats.norm.pdf(zz)
    return np.maximum(out, 0.0)


def probability_of_improvement(model: GPModel, Xq, incumbent, xi=PI_XI):
    mu, var = model.predict(Xq)
    sd = np.sqrt(var)
    target = incumbent - xi
    out = (mu < target).astype(np.float64)
    pos = sd > 0
    out[pos] = stats.norm.cdf((target - mu[pos]) / sd[pos])
    return out


def acquisition(model, Xq, incumbent, phase):
    if phase == "ei":
        return expected_improvement(model, Xq, incumbent)
    if phase == "pi":
        return probability_of_improvement(model, Xq, incumbent)
    raise ValueError(f"unknown phase {phase!r}")


def propose_next(model: GPModel, phase, rng, domain: SearchDomain, incumbent,
                 n_seeds=256, n_refine=4, explore=0.05):
    """Return ``(encoded candidate, tag)``; tag is the phase or ``"random"``."""
    if rng.random() < explore:
        return domain.random(rng), "random"
    best_val, best_mu, best_x = -np.inf, np.inf, None
    sob = qmc.Sobol(domain.n_cont, scramble=True, seed=int(rng.integers(2 ** 31)))
    seeds = sob.random(n_seeds)
    for cat in domain.categories:
        enc = np.array([domain.from_unit(u, cat) for u in seeds])
        vals = acquisition(model, enc, incumbent, phase)
        order = np.argsort(-vals, kind="stable")[:n_refine]

        def neg(u, cat=cat):
            return -float(acquisition(model, domain.from_unit(u, cat)[None, :], incumbent, phase)[0])

        for i in order:
            res = optimize.minimize(neg, seeds[i], method="Nelder-Mead",
                                    bounds=[(0.0, 1.0)] * domain.n_cont,
                                    options={"xatol": 1e-4, "fatol": 1e-12, "maxfev": 400})
            u = np.clip(res.x, 0.0, 1.0)
            x = domain.from_unit(u, cat)
            val = -res.fun if -res.fun >= vals[i] else vals[i]
            if val < vals[i]:
                x = enc[i]
            mu = float(model.predict(x[None, :])[0][0])
            if val > best_val or (val == best_val and mu < best_mu):
                best_val, best_mu, best_x = val, mu, x
    return best_x, phase


def initial_design(domain: SearchDomain, n, rng):
    """Latin hypercube over the box with the category assigned round-robin."""
    lhs = qmc.LatinHypercube(domain.n_cont, seed=int(rng.integers(2 ** 31))).random(n)
    cats = domain.categories
    return [domain.from_unit(u, cats[i % len(cats)]) for i, u in enumerate(lhs)]


@dataclass
class TraceEntry:
    iteration: int
    phase: str
    candidate: list
    cost: float
    incumbent_cost: float
    incumbent: list
    cached: bool = False

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class TuneTrace:
    entries: list = field(default_factory=list)

    @property
    def best(self) -> TraceEntry:
        return self.entries[-1]

    @property
    def consumed(self) -> int:
        return len(self.entries)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(e.to_json() + "\n")


def _key(x):
    return tuple(float(v) for v in np.round(np.asarray(x, dtype=np.float64), 12))


def minimize(fun: Callable, domain: SearchDomain, budget=(100, 100), seed=0, n_init=10,
             callback=None, restarts=8):
    """Minimize ``fun(cont, cat)`` with the two-phase BO loop.

    ``budget = (n1, n2)``: n1 evaluations in phase 1 (including the initial
    design), then n2 in phase 2.  Returns ``(best encoded point, TuneTrace)``.
    """
    n1, n2 = budget
    if n1 < n_init:
        raise ValueError("phase-1 budget must cover the initial design")
    rng = np.random.default_rng(seed)
    cache: dict = {}
    X, Y = [], []
    trace = TuneTrace()
    best_x, best_y = None, math.inf

    def evaluate(x, phase):
        nonlocal best_x, best_y
        cont, cat, _ = domain.decode(x)
        x = domain.encode(cont, cat)
        k = _key(x)
        cached = k in cache
        if not cached:
            cache[k] = float(fun(cont, cat))
            X.append(x)
            Y.append(cache[k])
        y = cache[k]
        if y < best_y:
            best_x, best_y = x, y
        c_best, k_best, _ = domain.decode(best_x)
        entry = TraceEntry(len(trace.entries), phase, [*map(float, cont), cat], y, best_y,
                           [*map(float, c_best), k_best], cached)
        trace.entries.append(entry)
        if callback is not None:
            callback(entry)

    for x in initial_design(domain, n_init, rng):
        evaluate(x, "init")
    for phase, count in (("ei", n1 - n_init), ("pi", n2)):
        for _ in range(count):
            model = gp_fit(np.array(X), np.array(Y), rng=rng, restarts=restarts)
            x, tag = propose_next(model, phase, rng, domain, best_y)
            if _key(domain.encode(*domain.decode(x)[:2])) in cache:
                x, tag = domain.random(rng), "random"
            evaluate(x, tag)
    return best_x, trace


def tune(scheme, suite=None, budget=(100, 100), seed=0, config=None, n_init=10,
         callback=None, refs=None):
    """Tune DSP controller parameters for ``scheme``; returns ``(params, cost, trace)``."""
    from .cost import cost

    domain = SearchDomain()

    def fun(cont, cat):
        params = ControllerParams(*(float(c) for c in cont), int(cat))
        return cost(params, scheme, suite, config, refs=refs).total

    best, trace = minimize(fun, domain, budget, seed, n_init, callback)
    return domain.decode_params(best), trace.best.incumbent_cost, trace


def cross_compare(candidates: dict, schemes: Sequence, suite=None, config=None, refs=None):
    """Cost of every named controller under every scheme: ``{name: {scheme: total}}``."""
    from .cost import cost

    return {name: {s.selector: cost(p, s, suite, config, refs=refs).total for s in schemes}
            for name, p in candidates.items()}
