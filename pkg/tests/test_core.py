import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lmcma.core import (
    ObjectiveProblem,
    RunStatus,
    SeededRng,
    Termination,
    default_lambda,
    expected_norm,
    make_weights,
    run_minimizer,
    sample_standard_normal_vector,
)


def test_default_lambda_values():
    assert default_lambda(128) == 18  # 3 ln 128 = 14.556 -> 14
    assert default_lambda(2048) == 26
    assert default_lambda(1) == 4  # ln 1 = 0
    with pytest.raises(ValueError):
        default_lambda(0)


def test_make_weights_lambda2():
    w = make_weights(2)
    assert w.mu == 1
    assert_allclose(w.w, [1.0])
    assert w.mu_w == 1.0


def test_make_weights_lambda4_hand_values():
    # hand evaluation of the formula: [ln3 - ln1, ln3 - ln2] / (2 ln3 - ln2)
    ln2, ln3 = math.log(2.0), math.log(3.0)
    expected = np.array([ln3, ln3 - ln2]) / (2 * ln3 - ln2)
    assert_allclose(expected, [0.730423, 0.269577], atol=5e-7)
    w = make_weights(4)
    assert w.mu == 2
    assert_allclose(w.w, expected, rtol=1e-15)


def test_make_weights_properties():
    for lam in range(2, 65):
        w = make_weights(lam)
        assert w.mu == lam // 2
        assert abs(w.w.sum() - 1.0) < 1e-12
        assert np.all(np.diff(w.w) <= 0)
        assert np.all(w.w > 0)
        assert 1.0 <= w.mu_w <= w.mu + 1e-12


def test_make_weights_rejects_singleton():
    with pytest.raises(ValueError):
        make_weights(1)


def test_expected_norm_values():
    assert_allclose(expected_norm(1), 1 - 0.25 + 1 / 21, rtol=1e-15)
    assert_allclose(expected_norm(100), 9.97505, atol=5e-6)
    # value/sqrt(n) -> 1 for large n
    assert abs(expected_norm(10**8) / 1e4 - 1.0) < 1e-8


def test_sampling_determinism_and_moments():
    a = sample_standard_normal_vector(SeededRng(42), 1000)
    b = sample_standard_normal_vector(SeededRng(42), 1000)
    assert np.array_equal(a, b)

    n = 100_000
    x = sample_standard_normal_vector(SeededRng(7), n)
    assert abs(x.mean()) < 4 / math.sqrt(n)
    assert abs(x.var() - 1.0) < 0.05

    with pytest.raises(ValueError):
        sample_standard_normal_vector(SeededRng(0), 0)


def test_seeded_rng_state_roundtrip():
    rng = SeededRng(11)
    rng.standard_normal(17)
    saved = rng.state
    a = rng.standard_normal(5)
    rng2 = SeededRng(0)
    rng2.state = saved
    assert np.array_equal(a, rng2.standard_normal(5))


def test_termination_validation():
    Termination(max_evaluations=0)  # zero budget is itself a stopping condition
    with pytest.raises(ValueError):
        Termination(max_evaluations=-1)
    with pytest.raises(ValueError):
        Termination(max_evaluations=10, min_sigma=0.0)


def _sphere_problem(n):
    return ObjectiveProblem(
        name="sphere", dimension=n, evaluate=lambda x: float(x @ x), optimum_value=0.0
    )


def test_evaluate_population_default_loops_rows():
    prob = _sphere_problem(3)
    X = np.arange(6.0).reshape(2, 3)
    assert_allclose(prob.evaluate_population(X), [5.0, 50.0])


class _StuckOptimizer:
    """Minimal ask/tell stub: fixed sampling around a fixed mean."""

    def __init__(self, n, lam, fitness_fn=None):
        self.n, self.lam = n, lam
        self._sigma = 1.0
        self._t = 0
        self.rng = SeededRng(1)

    dimension = property(lambda self: self.n)
    population_size = property(lambda self: self.lam)
    mean = property(lambda self: np.zeros(self.n))
    sigma = property(lambda self: self._sigma)
    generation = property(lambda self: self._t)

    def ask(self):
        return self.rng.standard_normal((self.lam, self.n))

    def tell(self, X, F):
        self._t += 1

    def state_arrays(self):
        return {}


def test_run_minimizer_zero_budget():
    trace = run_minimizer(
        _StuckOptimizer(4, 6), _sphere_problem(4), Termination(max_evaluations=0)
    )
    assert trace.records == []
    assert trace.final_status is RunStatus.BUDGET_EXHAUSTED
    assert trace.evaluations == 0


def test_run_minimizer_budget_charged_per_generation():
    trace = run_minimizer(
        _StuckOptimizer(4, 6),
        _sphere_problem(4),
        Termination(max_evaluations=20, target_fitness=0.0),
    )
    # 6 evals per generation; a third generation would exceed 20
    assert trace.final_status is RunStatus.BUDGET_EXHAUSTED
    assert trace.evaluations == 18


def test_run_minimizer_immediate_target():
    # target satisfied by construction on the first generation
    prob = ObjectiveProblem(
        name="flat", dimension=4, evaluate=lambda x: 0.0, optimum_value=0.0
    )
    trace = run_minimizer(
        _StuckOptimizer(4, 6), prob, Termination(max_evaluations=100, target_fitness=1e-10)
    )
    assert trace.final_status is RunStatus.TARGET_REACHED
    assert trace.evaluations == 1  # first candidate already hits the target
    assert trace.records[-1].best_fitness <= 1e-10


def test_run_minimizer_nan_fitness_is_numerical_failure():
    prob = ObjectiveProblem(
        name="nan", dimension=4, evaluate=lambda x: float("nan"), optimum_value=None
    )
    trace = run_minimizer(
        _StuckOptimizer(4, 6), prob, Termination(max_evaluations=100)
    )
    assert trace.final_status is RunStatus.NUMERICAL_FAILURE


def test_run_minimizer_trace_invariants():
    prob = _sphere_problem(4)
    trace = run_minimizer(
        _StuckOptimizer(4, 6),
        prob,
        Termination(max_evaluations=120, target_fitness=0.0),
    )
    evals = [r.evaluations for r in trace.records]
    best = [r.best_fitness for r in trace.records]
    assert evals == sorted(evals) and len(set(evals)) == len(evals)
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))


def test_run_minimizer_time_limit():
    trace = run_minimizer(
        _StuckOptimizer(4, 6),
        _sphere_problem(4),
        Termination(max_evaluations=10**9, target_fitness=0.0, max_seconds=0.0),
    )
    assert trace.final_status is RunStatus.TIME_EXHAUSTED
    assert trace.records == []


def test_run_minimizer_sigma_underflow():
    trace = run_minimizer(
        _StuckOptimizer(4, 6),
        _sphere_problem(4),
        Termination(max_evaluations=10**9, target_fitness=0.0, min_sigma=2.0),
    )
    assert trace.final_status is RunStatus.SIGMA_UNDERFLOW


def test_run_minimizer_decimation_keeps_final_record():
    prob = _sphere_problem(4)
    trace = run_minimizer(
        _StuckOptimizer(4, 6),
        prob,
        Termination(max_evaluations=120, target_fitness=0.0),
        record_every=7,
    )
    assert trace.records[-1].evaluations == 120
