import numpy as np
import pytest
from numpy.testing import assert_allclose

from lmcma.benchmarks import make_problem
from lmcma.core import NumericalFailureError, RunStatus, SeededRng, Termination
from lmcma.sepcma import SepCMA, SepCmaParams, optimize, sep_diag_update


def test_zero_learning_rate_keeps_diagonal():
    rng = np.random.default_rng(0)
    c_diag = rng.uniform(0.5, 2.0, 8)
    out = sep_diag_update(
        c_diag,
        p_c=rng.standard_normal(8),
        sorted_z=rng.standard_normal((3, 8)),
        weights=np.array([0.5, 0.3, 0.2]),
        c_cov=0.0,
        mu_cov=4.0,
    )
    assert_allclose(out, c_diag, rtol=1e-15)


def test_unit_inputs_hand_value():
    # c=1, p_c=0, all z^2=1, weights sum 1: c' = 1 - c_cov/mu_cov
    n = 6
    out = sep_diag_update(
        np.ones(n),
        p_c=np.zeros(n),
        sorted_z=np.ones((4, n)),
        weights=np.full(4, 0.25),
        c_cov=0.2,
        mu_cov=5.0,
    )
    assert_allclose(out, np.full(n, 1.0 - 0.2 / 5.0), rtol=1e-15)


def test_stationarity_identity():
    # with p_c_j^2 = c_j and weighted z^2 sum equal to 1 the diagonal is a
    # fixed point of the update
    rng = np.random.default_rng(4)
    n = 10
    c_diag = rng.uniform(0.2, 3.0, n)
    p_c = np.sqrt(c_diag)
    weights = np.array([0.6, 0.4])
    sorted_z = np.ones((2, n))
    out = sep_diag_update(c_diag, p_c, sorted_z, weights, c_cov=0.3, mu_cov=2.5)
    assert_allclose(out, c_diag, rtol=1e-13)


def test_nonpositive_diagonal_raises():
    with pytest.raises(NumericalFailureError):
        sep_diag_update(
            np.array([1.0, 0.0]),
            p_c=np.zeros(2),
            sorted_z=np.ones((1, 2)),
            weights=np.array([1.0]),
            c_cov=0.1,
            mu_cov=2.0,
        )


def test_zero_cov_rate_reduces_to_isotropic_csa_es():
    # with c_cov = 0 the diagonal stays at 1 and sampling stays isotropic
    n = 8
    params = SepCmaParams.defaults(n)
    params = type(params)(
        n=params.n,
        weights=params.weights,
        c_sigma=params.c_sigma,
        d_sigma=params.d_sigma,
        c_c=params.c_c,
        c_cov=0.0,
        mu_cov=params.mu_cov,
    )
    prob = make_problem("sphere", n)
    opt = SepCMA(params, np.full(n, 1.0), 1.0, SeededRng(2))
    for _ in range(20):
        X = opt.ask()
        opt.tell(X, prob.evaluate_population(X))
    assert_allclose(opt.c_diag, np.ones(n), rtol=1e-15)


def test_params_reject_out_of_range_rates():
    base = SepCmaParams.defaults(16)
    with pytest.raises(ValueError):
        SepCmaParams(
            n=16, weights=base.weights, c_sigma=base.c_sigma, d_sigma=base.d_sigma,
            c_c=base.c_c, c_cov=1.0, mu_cov=base.mu_cov,
        )
    with pytest.raises(ValueError):
        SepCmaParams(
            n=16, weights=base.weights, c_sigma=base.c_sigma, d_sigma=base.d_sigma,
            c_c=base.c_c, c_cov=base.c_cov, mu_cov=0.5,
        )


def test_separable_ellipsoid_converges():
    n = 32
    prob = make_problem("elli", n)
    rng = SeededRng(9)
    mean0 = rng.uniform(-5, 5, n)
    trace = optimize(prob, mean0, 5.0, rng, Termination(max_evaluations=60_000))
    assert trace.final_status is RunStatus.TARGET_REACHED


def test_diagonal_stays_positive_on_long_run():
    n = 16
    prob = make_problem("elli", n)
    rng = SeededRng(13)
    opt = SepCMA(SepCmaParams.defaults(n), rng.uniform(-5, 5, n), 5.0, rng)
    for _ in range(2_000):
        X = opt.ask()
        opt.tell(X, prob.evaluate_population(X))
    assert np.all(opt.c_diag > 0.0)


def test_state_is_linear_in_n():
    n = 512
    opt = SepCMA(SepCmaParams.defaults(n), np.zeros(n), 1.0, SeededRng(0))
    for arr in opt.state_arrays().values():
        assert arr.ndim == 1 and arr.size <= n


class _PermutedRng(SeededRng):
    """Draws identical to SeededRng(seed) but with permuted columns."""

    def __init__(self, seed, perm):
        super().__init__(seed)
        self._perm = np.asarray(perm)

    def standard_normal(self, shape):
        z = super().standard_normal(shape)
        return z[..., self._perm]

    def uniform(self, low, high, size):
        return super().uniform(low, high, size)[self._perm]


def test_coordinate_permutation_equivariance():
    # permuting problem coordinates, the initial mean and the sampling
    # columns permutes the whole run; tolerance covers the float
    # reassociation in norms and fitness sums under permuted order
    n = 12
    perm = np.random.default_rng(0).permutation(n)
    inv_perm = np.argsort(perm)
    coeffs = 10.0 ** (3.0 * np.arange(n) / (n - 1))

    from lmcma.core import ObjectiveProblem

    f1 = ObjectiveProblem(
        "aniso", n, lambda x: float(coeffs @ (x * x)), optimum_value=0.0
    )
    f2 = ObjectiveProblem(
        "aniso-perm",
        n,
        lambda x: float(coeffs @ (x[inv_perm] * x[inv_perm])),
        optimum_value=0.0,
    )

    params = SepCmaParams.defaults(n)
    opt1 = SepCMA(params, SeededRng(21).uniform(-5, 5, n), 2.0, SeededRng(21))
    opt2 = SepCMA(params, _PermutedRng(21, perm).uniform(-5, 5, n), 2.0, _PermutedRng(21, perm))
    for _ in range(60):
        X1 = opt1.ask()
        X2 = opt2.ask()
        assert_allclose(X2, X1[:, perm], rtol=1e-9, atol=1e-12)
        opt1.tell(X1, f1.evaluate_population(X1))
        opt2.tell(X2, f2.evaluate_population(X2))
    assert_allclose(opt2.mean, opt1.mean[perm], rtol=1e-7, atol=1e-10)
    assert_allclose(opt2.c_diag, opt1.c_diag[perm], rtol=1e-7, atol=1e-10)
