import math

import numpy as np
import pytest

from mprktune.pdrs import REALMIN
from mprktune.problems import (
    make_brusselator,
    make_hires,
    make_npzd,
    make_pr4,
    make_problem,
    make_robertson,
    pr4_g,
    pr4_gprime,
    pr4_lambda,
    training_suite,
    validation_suite,
)


def robertson_f(y, t):
    y1, y2, y3 = y
    return np.array([-0.04 * y1 + 1e4 * y2 * y3,
                     0.04 * y1 - 1e4 * y2 * y3 - 3e7 * y2 ** 2,
                     3e7 * y2 ** 2])


def hires_f(y, t):
    y1, y2, y3, y4, y5, y6, y7, y8 = y
    return np.array([
        -1.71 * y1 + 0.43 * y2 + 8.32 * y3 + 0.0007,
        1.71 * y1 - 8.75 * y2,
        -10.03 * y3 + 0.43 * y4 + 0.035 * y5,
        8.32 * y2 + 1.71 * y3 - 1.12 * y4,
        -1.745 * y5 + 0.43 * y6 + 0.43 * y7,
        -280 * y6 * y8 + 0.69 * y4 + 1.71 * y5 - 0.43 * y6 + 0.69 * y7,
        280 * y6 * y8 - 1.81 * y7,
        -280 * y6 * y8 + 1.81 * y7,
    ])


def npzd_f(y, t):
    n, p, z, d = y
    up = n * p / (0.01 + n)
    graze = 0.5 * (1 - math.exp(-1.21 * p * p)) * z
    return np.array([0.01 * p + 0.01 * z + 0.003 * d - up,
                     up - 0.01 * p - graze - 0.05 * p,
                     graze - 0.01 * z - 0.02 * z,
                     0.05 * p + 0.02 * z - 0.003 * d])


def brusselator_f(y, t):
    y1, y2, y3, y4, y5, y6 = y
    return np.array([-y1, -y2 * y5, y2 * y5, y5,
                     y1 - y2 * y5 + y5 ** 2 * y6 - y5, y2 * y5 - y5 ** 2 * y6])


def pr4_f(xi):
    lam = pr4_lambda(xi)
    return lambda y, t: lam @ (y - pr4_g(t)) + pr4_gprime(t)


CASES = [
    (make_robertson, robertson_f),
    (make_hires, hires_f),
    (make_npzd, npzd_f),
    (make_brusselator, brusselator_f),
    (lambda: make_pr4(0.4), pr4_f(0.4)),
    (lambda: make_pr4(0.1), pr4_f(0.1)),
]


@pytest.mark.parametrize("make,oracle", CASES)
def test_split_reconstructs_ode(make, oracle):
    prob = make()
    rng = np.random.default_rng(12)
    for _ in range(100):
        y = 10.0 ** rng.uniform(-3, 0.5, prob.dim)
        t = float(rng.uniform(prob.t0, min(prob.t_end, 100.0)))
        P, D, rp, rd = prob.evaluate(y, t)
        assert np.all(P >= 0) and np.all(D >= 0) and np.all(rp >= 0) and np.all(rd >= 0)
        f = oracle(y, t)
        scale = np.abs(P).sum(1) + np.abs(D).sum(1) + rp + rd + np.abs(f)
        assert np.all(np.abs(prob.rhs(y, t) - f) <= 1e-13 * scale)


@pytest.mark.parametrize("make", [make_robertson, make_npzd, make_brusselator, lambda: make_pr4(0.4)])
def test_conservative_sum(make):
    prob = make()
    rng = np.random.default_rng(13)
    for _ in range(20):
        y = 10.0 ** rng.uniform(-3, 1, prob.dim)
        P, *_ = prob.evaluate(y, 1.0)
        assert abs(prob.rhs(y, 1.0).sum()) <= 1e-14 * P.sum()


def test_pr4_g_and_derivative():
    assert np.array_equal(pr4_g(0.0), [2.0, 2.0, 1.0, 1.0])
    ts = np.linspace(0, 20 * math.pi, 97)
    gp = pr4_gprime(ts)
    assert np.allclose(gp[:, 0], -gp[:, 3], rtol=0, atol=1e-15)
    assert np.allclose(gp[:, 1], -gp[:, 2], rtol=0, atol=1e-15)
    h = 1e-6
    fd = (pr4_g(ts + h) - pr4_g(ts - h)) / (2 * h)
    assert np.all(np.abs(fd - gp) <= 1e-6 * np.maximum(np.abs(gp), 1.0))


@pytest.mark.parametrize("xi", [0.0, 0.1, 0.25, 0.4, 0.5])
def test_lambda_spectrum(xi):
    lam = pr4_lambda(xi)
    off = lam - np.diag(np.diag(lam))
    assert np.all(off >= 0)
    assert np.allclose(lam.sum(axis=0), 0.0, atol=1e-15)
    ev = np.sort_complex(np.roots(np.poly(lam)))
    want = np.sort_complex(np.array([0, -2, -1 + (1 - 2 * xi) * 1j, -1 - (1 - 2 * xi) * 1j]))
    assert np.allclose(ev, want, rtol=0, atol=1e-7 if xi == 0.5 else 1e-10)


def test_lambda_eigenvalues_at_04():
    ev = np.linalg.eigvals(pr4_lambda(0.4))
    want = [0, -2, -1 + 0.2j, -1 - 0.2j]
    for w in want:
        assert np.min(np.abs(ev - w)) < 1e-12


def test_pr4_xi_range():
    with pytest.raises(ValueError):
        make_pr4(0.6)


def test_pr4_literal_split_is_same_ode():
    a, b = make_pr4(0.4), make_pr4(0.4, literal_split=True)
    rng = np.random.default_rng(2)
    for _ in range(20):
        y = rng.uniform(0.1, 3, 4)
        t = float(rng.uniform(0, 60))
        assert np.allclose(a.rhs(y, t), b.rhs(y, t), rtol=1e-13, atol=1e-14)
    assert a.name != b.name


def test_robertson_initial_rhs():
    prob = make_robertson()
    assert np.array_equal(prob.y0, [1.0, REALMIN, REALMIN])
    assert np.allclose(prob.rhs(prob.y0, 0.0), [-0.04, 0.04, 0.0], rtol=1e-14, atol=1e-200)
    assert (prob.t_end, prob.dt0) == (1e8, 1e-6)


def test_hires_setup():
    prob = make_hires()
    want = np.full(8, REALMIN)
    want[0], want[7] = 1.0, 0.0057
    assert np.array_equal(prob.y0, want)
    assert (prob.t_end, prob.dt0) == (321.8122, 0.5e-3)
    y = np.linspace(0.1, 0.8, 8)
    P, D, _, rd = prob.evaluate(y, 0.0)
    assert P[6, 7] == pytest.approx(280 * y[5] * y[7]) and D[7, 6] == P[6, 7]
    assert rd[5] == pytest.approx(280 * y[5] * y[7])


def test_npzd_grazing_term():
    prob = make_npzd()
    y = np.array([1.0, 0.7, 0.4, 1.0])
    P, *_ = prob.evaluate(y, 0.0)
    assert P[2, 1] == pytest.approx(0.5 * (1 - math.exp(-1.21 * 0.49)) * 0.4, rel=1e-15)
    P, *_ = prob.evaluate(np.array([1.0, 1e-200, 0.4, 1.0]), 0.0)
    assert P[2, 1] == 0.0
    assert np.array_equal(prob.y0, [8.0, 2.0, 1.0, 4.0])
    assert (prob.t_end, prob.dt0) == (5.0, 1.0)


def test_brusselator_setup():
    prob = make_brusselator()
    assert np.array_equal(prob.y0, [10.0, 10.0, REALMIN, REALMIN, 0.1, 0.1])
    assert (prob.t_end, prob.dt0) == (10.0, 0.1)


def test_make_problem_selectors():
    assert make_problem("pr4").name == "pr4_0.4"
    assert make_problem("pr4:0.1").name == "pr4_0.1"
    assert make_problem("HIRES").name == "hires"
    with pytest.raises(KeyError):
        make_problem("lorenz")


def test_suites():
    assert [p.name for p in training_suite()] == ["pr4_0.4", "robertson", "hires", "npzd"]
    assert [p.name for p in validation_suite()] == ["pr4_0.1", "pr4_0.3", "pr4_0.5", "brusselator"]
