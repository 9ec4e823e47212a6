import numpy as np
import pytest

from mprktune.errors import EvaluationError
from mprktune.pdrs import REALMIN, PDRSProblem, SplitMode, check_conservative, sanitize_initial, split_rhs
from mprktune.problems import make_hires, make_robertson


def test_split_rhs_zero_field():
    p, d = split_rhs(lambda y, t: np.zeros(3), np.ones(3), 0.0)
    assert not p.any() and not d.any()


def test_split_rhs_signs():
    p, d = split_rhs(lambda y, t: np.array([3.0, -3.0]), np.ones(2), 0.0)
    assert p[0, 0] == 3.0 and d[1, 0] == 3.0
    assert p.sum() == 3.0 and d.sum() == 3.0


def test_split_rhs_reconstructs_exactly():
    rng = np.random.default_rng(1)
    for _ in range(100):
        f = rng.normal(size=5) * 10.0 ** rng.integers(-5, 5)
        p, d = split_rhs(lambda y, t: f, np.ones(5), 0.0)
        assert np.array_equal((p - d).sum(axis=1), f)


def test_split_rhs_rejects_nonfinite():
    with pytest.raises(EvaluationError) as exc:
        split_rhs(lambda y, t: np.array([1.0, np.nan]), np.ones(2), 0.5)
    assert exc.value.index == 1


def test_split_rhs_requires_positive_state():
    with pytest.raises(ValueError):
        split_rhs(lambda y, t: y, np.array([1.0, 0.0]), 0.0)


@pytest.mark.parametrize("y0,expected", [
    ([1.0, 0.0, 0.0], [1.0, REALMIN, REALMIN]),
    ([2.0, 3.0], [2.0, 3.0]),
    ([0.0, 0.0, 0.0, 0.0], [REALMIN] * 4),
])
def test_sanitize_initial(y0, expected):
    assert np.array_equal(sanitize_initial(y0), expected)


def test_sanitize_initial_rejects_negative():
    with pytest.raises(ValueError):
        sanitize_initial([1.0, -1e-300])


def _random_states(n, count, seed=3):
    rng = np.random.default_rng(seed)
    return [(10.0 ** rng.uniform(-6, 1, n), float(rng.uniform(0, 10))) for _ in range(count)]


def test_robertson_is_conservative():
    ok, worst = check_conservative(make_robertson(), _random_states(3, 50))
    assert ok and worst == 0.0


def test_hires_pds_part_conservative_with_rest_terms():
    prob = make_hires()
    ok, worst = check_conservative(prob, _random_states(8, 50))
    assert ok and worst == 0.0
    _, _, rp, rd = prob.evaluate(np.ones(8), 0.0)
    assert rp.any() and rd.any()


def test_check_conservative_counterexample():
    def terms(par, y, t, P, D, rp, rd):
        P[0, 1] = 1.0
        D[1, 0] = 2.0

    prob = PDRSProblem("bad", 2, terms, np.ones(2), 0.0, 1.0, 0.1)
    ok, worst = check_conservative(prob, [(np.ones(2), 0.0)])
    assert not ok and worst == 1.0


def test_problem_validation():
    def terms(par, y, t, P, D, rp, rd):
        pass

    with pytest.raises(ValueError):
        PDRSProblem("x", 2, terms, np.array([1.0, 0.0]), 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        PDRSProblem("x", 2, terms, np.ones(2), 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        PDRSProblem("x", 2, terms, np.ones(3), 0.0, 1.0, 0.1)


def test_plain_rest_mode_folds_destruction():
    prob = make_hires().with_split(SplitMode.PLAIN_REST)
    y = np.linspace(0.1, 0.8, 8)
    _, _, rp, rd = prob.evaluate(y, 0.0)
    assert not rd.any()
    assert np.allclose(prob.rhs(y, 0.0), make_hires().rhs(y, 0.0), rtol=1e-15, atol=0)


def test_pds_column_balance():
    rng = np.random.default_rng(9)
    prob = make_robertson()
    for _ in range(20):
        y = 10.0 ** rng.uniform(-8, 0, 3)
        f = prob.rhs(y, 0.0)
        P, _, _, _ = prob.evaluate(y, 0.0)
        assert abs(f.sum()) <= 1e-14 * P.sum()


def test_from_rhs_rest_split():
    prob = PDRSProblem.from_rhs(lambda y, t: np.array([-y[0], y[0]]), [1.0, 1e-3], 0.0, 1.0, 0.1)
    P, D, rp, rd = prob.evaluate(np.array([0.5, 0.5]), 0.0)
    assert not P.any() and not D.any()
    assert np.array_equal(rp, [0.0, 0.5]) and np.array_equal(rd, [0.5, 0.0])
