"""sep-CMA-ES: diagonal-only covariance adaptation in linear time and space.

Only the n diagonal entries of the covariance matrix are adapted, which
reduces every per-generation operation to coordinate-wise arithmetic.
The algorithm exploits separability but is not rotation invariant. Step
size uses CSA with the full-CMA rate constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    NumericalFailureError,
    ObjectiveProblem,
    Optimizer,
    RecombinationWeights,
    RunTrace,
    SeededRng,
    Termination,
    check_finite_scalar,
    check_finite_vector,
    default_lambda,
    make_weights,
    run_minimizer,
)
from .stepsize import CsaState, csa_update


def sep_diag_update(
    c_diag: np.ndarray,
    p_c: np.ndarray,
    sorted_z: np.ndarray,
    weights: np.ndarray,
    c_cov: float,
    mu_cov: float,
) -> np.ndarray:
    """Update the covariance diagonal from the path and the mu best samples.

    Per coordinate j:
    c'_j = (1-c_cov) c_j + (c_cov/mu_cov) p_c_j^2
           + c_cov (1 - 1/mu_cov) c_j * sum_i w_i z_ij^2
    where row i of `sorted_z` is the i-th best candidate mapped back to
    sampling space, z_ij = (x_ij - mean_j) / (sigma sqrt(c_j)).
    """
    if np.any(c_diag <= 0.0):
        raise NumericalFailureError("covariance diagonal lost positivity")
    rank_mu = weights @ (sorted_z * sorted_z)
    return (
        (1.0 - c_cov) * c_diag
        + (c_cov / mu_cov) * p_c * p_c
        + c_cov * (1.0 - 1.0 / mu_cov) * c_diag * rank_mu
    )


@dataclass(frozen=True)
class SepCmaParams:
    """sep-CMA-ES strategy parameters.

    mu_cov = mu_w and the diagonal learning rate
    c_cov = ((n+2)/3) [ 2/(mu_cov (n+sqrt 2)^2)
                        + (1-1/mu_cov) min(1, (2 mu_cov - 1)/((n+2)^2 + mu_cov)) ]
    i.e. the full-covariance rate boosted by (n+2)/3 for the diagonal case.
    """

    n: int
    weights: RecombinationWeights
    c_sigma: float
    d_sigma: float
    c_c: float
    c_cov: float
    mu_cov: float

    def __post_init__(self):
        if not 0.0 < self.c_sigma < 1.0:
            raise ValueError(f"c_sigma must be in (0, 1), got {self.c_sigma}")
        if not 0.0 < self.c_c <= 1.0:
            raise ValueError(f"c_c must be in (0, 1], got {self.c_c}")
        # c_cov = 0 is the degenerate no-learning case used in tests
        if not 0.0 <= self.c_cov < 1.0:
            raise ValueError(f"c_cov must be in [0, 1), got {self.c_cov}")
        if self.mu_cov < 1.0:
            raise ValueError(f"mu_cov must be >= 1, got {self.mu_cov}")
        if self.d_sigma <= 0.0:
            raise ValueError(f"d_sigma must be positive, got {self.d_sigma}")

    @property
    def lam(self) -> int:
        return self.weights.lam

    @property
    def mu(self) -> int:
        return self.weights.mu

    @property
    def mu_w(self) -> float:
        return self.weights.mu_w

    @classmethod
    def defaults(cls, n: int, lam: Optional[int] = None) -> "SepCmaParams":
        if lam is None:
            lam = default_lambda(n)
        weights = make_weights(lam)
        mu_w = weights.mu_w
        mu_cov = mu_w
        c_cov_full = (2.0 / (mu_cov * (n + math.sqrt(2.0)) ** 2)) + (
            1.0 - 1.0 / mu_cov
        ) * min(1.0, (2.0 * mu_cov - 1.0) / ((n + 2.0) ** 2 + mu_cov))
        return cls(
            n=n,
            weights=weights,
            c_sigma=(mu_w + 2.0) / (n + mu_w + 3.0),
            d_sigma=1.0
            + (mu_w + 2.0) / (n + mu_w + 3.0)
            + 2.0 * max(0.0, math.sqrt((mu_w - 1.0) / (n + 1.0)) - 1.0),
            c_c=4.0 / (n + 4.0),
            c_cov=((n + 2.0) / 3.0) * c_cov_full,
            mu_cov=mu_cov,
        )


class SepCMA(Optimizer):
    """The (mu/mu_w, lambda) sep-CMA-ES as an ask/tell optimizer."""

    def __init__(
        self,
        params: SepCmaParams,
        mean0: np.ndarray,
        sigma0: float,
        rng: SeededRng,
    ):
        mean0 = np.asarray(mean0, dtype=float)
        if mean0.shape != (params.n,):
            raise ValueError(f"mean0 must have shape ({params.n},)")
        check_finite_vector("mean0", mean0)
        if sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {sigma0}")
        self.params = params
        self.rng = rng
        self._mean = mean0.copy()
        self._sigma = float(sigma0)
        self._p_c = np.zeros(params.n)
        self.csa = CsaState(
            p_sigma=np.zeros(params.n), c_sigma=params.c_sigma, d_sigma=params.d_sigma
        )
        self.c_diag = np.ones(params.n)
        self._t = 0

    @property
    def dimension(self) -> int:
        return self.params.n

    @property
    def population_size(self) -> int:
        return self.params.lam

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def sigma(self) -> float:
        return self._sigma

    @property
    def generation(self) -> int:
        return self._t

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.params.lam, self.params.n))
        return self._mean + self._sigma * (z * np.sqrt(self.c_diag))

    def tell(self, candidates: np.ndarray, fitnesses: np.ndarray) -> None:
        params = self.params
        fitnesses = np.asarray(fitnesses, dtype=float)
        if candidates.shape != (params.lam, params.n) or fitnesses.shape != (params.lam,):
            raise ValueError("candidates/fitnesses do not match the population shape")
        if np.isnan(fitnesses).any():
            raise NumericalFailureError("fitness values contain NaN")

        order = np.argsort(fitnesses, kind="stable")
        best = order[: params.mu]
        new_mean = params.weights.w @ candidates[best]
        delta = (new_mean - self._mean) / self._sigma

        # map back to sampling space with the pre-update diagonal
        sqrt_diag = np.sqrt(self.c_diag)
        z_w = delta / sqrt_diag
        sorted_z = (candidates[best] - self._mean) / (self._sigma * sqrt_diag)

        c_c = params.c_c
        self._p_c = (1.0 - c_c) * self._p_c + math.sqrt(
            c_c * (2.0 - c_c) * params.mu_w
        ) * delta
        self.c_diag = sep_diag_update(
            self.c_diag, self._p_c, sorted_z, params.weights.w, params.c_cov, params.mu_cov
        )
        if np.any(self.c_diag <= 0.0) or not np.all(np.isfinite(self.c_diag)):
            raise NumericalFailureError("covariance diagonal lost positivity")

        self.csa, self._sigma = csa_update(
            self.csa, z_w, params.mu_w, self._sigma, params.n
        )

        self._mean = new_mean
        self._t += 1
        check_finite_vector("mean", self._mean)
        check_finite_vector("p_c", self._p_c)
        check_finite_scalar("sigma", self._sigma)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "mean": self._mean,
            "p_c": self._p_c,
            "p_sigma": self.csa.p_sigma,
            "c_diag": self.c_diag,
        }


def optimize(
    problem: ObjectiveProblem,
    mean0: np.ndarray,
    sigma0: float,
    rng: SeededRng,
    termination: Termination,
    params: Optional[SepCmaParams] = None,
    record_every: int = 1,
) -> RunTrace:
    """Run sep-CMA-ES on `problem` until `termination` fires."""
    if params is None:
        params = SepCmaParams.defaults(problem.dimension)
    optimizer = SepCMA(params, mean0, sigma0, rng)
    return run_minimizer(optimizer, problem, termination, record_every=record_every)
