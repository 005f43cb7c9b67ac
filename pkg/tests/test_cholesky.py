import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lmcma.benchmarks import make_problem
from lmcma.cholesky import (
    MAX_DIMENSION,
    CholeskyCMA,
    CholeskyParams,
    optimize,
    rank_one_update_factor,
    rank_one_update_inverse,
)
from lmcma.core import RunStatus, SeededRng, Termination


def random_well_conditioned(n, rng):
    """A random factor with singular values in [0.5, 2]."""
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q1 @ np.diag(rng.uniform(0.5, 2.0, n)) @ Q2


def test_zero_dual_scales_factor():
    A = np.diag([1.0, 2.0, 3.0])
    c_1 = 0.36
    assert_allclose(rank_one_update_factor(A, np.zeros(3), np.zeros(3), c_1), 0.8 * A)
    assert_allclose(rank_one_update_inverse(A, np.zeros(3), c_1), A / 0.8)


def test_identity_unit_vector_hand_values():
    # A=I, p_c=v=e1, c_1=0.75: coefficient 0.5*(sqrt(4)-1) = 0.5
    n = 4
    A = np.eye(n)
    e1 = np.zeros(n)
    e1[0] = 1.0
    A_new = rank_one_update_factor(A, e1, e1, 0.75)
    assert_allclose(np.diag(A_new), [1.0, 0.5, 0.5, 0.5], rtol=1e-15)
    # Cholesky-factor identity of the rank-one covariance update
    assert_allclose(A_new @ A_new.T, 0.25 * np.eye(n) + 0.75 * np.outer(e1, e1), atol=1e-15)
    A_inv_new = rank_one_update_inverse(np.eye(n), e1, 0.75)
    assert np.abs(A_new @ A_inv_new - np.eye(n)).max() <= 1e-14


def test_factor_identity_on_random_cases():
    rng = np.random.default_rng(42)
    for n in (2, 3, 5, 8, 16):
        for _ in range(20):
            A = random_well_conditioned(n, rng)
            p_c = rng.standard_normal(n)
            v = np.linalg.solve(A, p_c)
            c_1 = float(rng.uniform(0.01, 0.5))
            A_new = rank_one_update_factor(A, p_c, v, c_1)
            target = (1 - c_1) * (A @ A.T) + c_1 * np.outer(p_c, p_c)
            assert np.abs(A_new @ A_new.T - target).max() <= 1e-12


def test_paired_updates_preserve_inverse():
    rng = np.random.default_rng(3)
    n = 10
    A = np.eye(n)
    A_inv = np.eye(n)
    c_1 = 2.0 / (n + math.sqrt(2.0)) ** 2
    for _ in range(1000):
        p_c = rng.standard_normal(n)
        v = A_inv @ p_c
        A = rank_one_update_factor(A, p_c, v, c_1)
        A_inv = rank_one_update_inverse(A_inv, v, c_1)
    assert np.abs(A @ A_inv - np.eye(n)).max() <= 1e-6


def test_default_parameters():
    p = CholeskyParams.defaults(16)
    assert p.lam == 12 and p.mu == 6
    assert_allclose(p.c_c, 4.0 / 20.0, rtol=1e-15)
    assert_allclose(p.c_1, 2.0 / (16 + math.sqrt(2)) ** 2, rtol=1e-15)
    mu_w = p.mu_w
    assert_allclose(p.c_sigma, math.sqrt(mu_w) / (4 + math.sqrt(mu_w)), rtol=1e-15)
    assert p.d_sigma >= 1.0
    assert 0 < p.c_sigma < 1 and 0 < p.c_c < 1 and 0 < p.c_1 < 1
    assert MAX_DIMENSION == 4096


def test_params_reject_out_of_range_rates():
    base = CholeskyParams.defaults(16)
    with pytest.raises(ValueError):
        CholeskyParams(
            n=16, weights=base.weights, c_sigma=1.5, d_sigma=base.d_sigma,
            c_c=base.c_c, c_1=base.c_1,
        )
    with pytest.raises(ValueError):
        CholeskyParams(
            n=16, weights=base.weights, c_sigma=base.c_sigma, d_sigma=0.5,
            c_c=base.c_c, c_1=base.c_1,
        )


def test_first_generation_samples_from_identity():
    # A = I at t=0, so candidates are mean + sigma * z
    n = 6
    opt = CholeskyCMA(CholeskyParams.defaults(n), np.zeros(n), 2.0, SeededRng(8))
    X = opt.ask()
    z = SeededRng(8).standard_normal((opt.population_size, n))
    assert_allclose(X, 2.0 * z, rtol=1e-15)


def test_sphere_n16_converges_within_budget():
    prob = make_problem("sphere", 16)
    rng = SeededRng(3)
    mean0 = rng.uniform(-5, 5, 16)
    trace = optimize(prob, mean0, 5.0, rng, Termination(max_evaluations=6_000))
    assert trace.final_status is RunStatus.TARGET_REACHED
    assert trace.evaluations <= 6_000


def test_drift_stays_small_during_real_run():
    n = 16
    prob = make_problem("elli", n)
    rng = SeededRng(1)
    opt = CholeskyCMA(CholeskyParams.defaults(n), rng.uniform(-5, 5, n), 5.0, rng)
    for _ in range(500):
        X = opt.ask()
        opt.tell(X, prob.evaluate_population(X))
    assert np.abs(opt.A @ opt.A_inv - np.eye(n)).max() <= 1e-6


def test_deterministic_replay():
    def run():
        prob = make_problem("sphere", 8)
        rng = SeededRng(5)
        mean0 = rng.uniform(-5, 5, 8)
        return optimize(prob, mean0, 5.0, rng, Termination(max_evaluations=2_000))

    t1, t2 = run(), run()
    assert [r.best_fitness for r in t1.records] == [r.best_fitness for r in t2.records]


def test_tell_requires_matching_ask():
    opt = CholeskyCMA(CholeskyParams.defaults(4), np.zeros(4), 1.0, SeededRng(0))
    with pytest.raises(RuntimeError):
        opt.tell(np.zeros((opt.population_size, 4)), np.zeros(opt.population_size))
