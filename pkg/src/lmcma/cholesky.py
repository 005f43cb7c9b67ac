"""Cholesky-CMA-ES: full-matrix rank-one CMA with incremental factor updates.

The covariance matrix itself is never formed. A general (non-triangular)
factor A with A A^T = C and its inverse are kept explicitly and updated
by a rank-one formula each generation, so sampling and updating cost
O(n^2) per evaluation and O(n^2) memory. Step size uses CSA. This is the
full-covariance baseline against which the limited-memory variant is
measured; above `MAX_DIMENSION` the quadratic memory makes it pointless
and the harness refuses to run it.
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

# quadratic storage guard enforced by the harness
MAX_DIMENSION = 4096


def rank_one_update_factor(
    A: np.ndarray, p_c: np.ndarray, v: np.ndarray, c_1: float
) -> np.ndarray:
    """Rank-one update of the factor A, given v = A^-1 p_c.

    Returns sqrt(1-c_1) A + coeff * outer(p_c, v) with the coefficient
    chosen so that A' A'^T = (1-c_1) A A^T + c_1 p_c p_c^T; for v = 0 the
    update degenerates to pure scaling by sqrt(1-c_1).
    """
    a = math.sqrt(1.0 - c_1)
    v_sq = float(v @ v)
    if v_sq == 0.0:
        return a * A
    root = math.sqrt(1.0 + (c_1 / (1.0 - c_1)) * v_sq)
    coeff = (a / v_sq) * (root - 1.0)
    return a * A + coeff * np.outer(p_c, v)


def rank_one_update_inverse(A_inv: np.ndarray, v: np.ndarray, c_1: float) -> np.ndarray:
    """Matching rank-one update of the inverse factor.

    Returns A_inv/sqrt(1-c_1) - coeff * outer(v, v^T A_inv), the exact
    inverse of `rank_one_update_factor` applied with the same v.
    """
    a = math.sqrt(1.0 - c_1)
    v_sq = float(v @ v)
    if v_sq == 0.0:
        return A_inv / a
    root = math.sqrt(1.0 + (c_1 / (1.0 - c_1)) * v_sq)
    coeff = (1.0 - 1.0 / root) / (a * v_sq)
    return A_inv / a - coeff * np.outer(v, v @ A_inv)


@dataclass(frozen=True)
class CholeskyParams:
    """Cholesky-CMA-ES strategy parameters (all rates in (0, 1))."""

    n: int
    weights: RecombinationWeights
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float

    def __post_init__(self):
        for name in ("c_sigma", "c_c", "c_1"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if self.d_sigma < 1.0:
            raise ValueError(f"d_sigma must be >= 1, got {self.d_sigma}")

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
    def defaults(cls, n: int, lam: Optional[int] = None) -> "CholeskyParams":
        if lam is None:
            lam = default_lambda(n)
        weights = make_weights(lam)
        mu_w = weights.mu_w
        c_sigma = math.sqrt(mu_w) / (math.sqrt(n) + math.sqrt(mu_w))
        d_sigma = 1.0 + c_sigma + 2.0 * max(0.0, math.sqrt((mu_w - 1.0) / (n + 1.0)) - 1.0)
        return cls(
            n=n,
            weights=weights,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            c_c=4.0 / (n + 4.0),
            c_1=2.0 / (n + math.sqrt(2.0)) ** 2,
        )


class CholeskyCMA(Optimizer):
    """The (mu/mu_w, lambda) Cholesky-CMA-ES as an ask/tell optimizer.

    `tell` must be fed the candidates of the immediately preceding `ask`:
    the base normal samples are kept internally to update the step-size
    path.
    """

    def __init__(
        self,
        params: CholeskyParams,
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
        self.A = np.eye(params.n)
        self.A_inv = np.eye(params.n)
        self._t = 0
        self._last_z: Optional[np.ndarray] = None

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
        self._last_z = z
        return self._mean + self._sigma * (z @ self.A.T)

    def tell(self, candidates: np.ndarray, fitnesses: np.ndarray) -> None:
        params = self.params
        fitnesses = np.asarray(fitnesses, dtype=float)
        if candidates.shape != (params.lam, params.n) or fitnesses.shape != (params.lam,):
            raise ValueError("candidates/fitnesses do not match the population shape")
        if self._last_z is None:
            raise RuntimeError("tell() called before ask()")
        if np.isnan(fitnesses).any():
            raise NumericalFailureError("fitness values contain NaN")

        order = np.argsort(fitnesses, kind="stable")
        best = order[: params.mu]
        new_mean = params.weights.w @ candidates[best]
        z_w = params.weights.w @ self._last_z[best]

        c_c = params.c_c
        self._p_c = (1.0 - c_c) * self._p_c + math.sqrt(
            c_c * (2.0 - c_c) * params.mu_w
        ) * (self.A @ z_w)
        v = self.A_inv @ self._p_c
        self.A = rank_one_update_factor(self.A, self._p_c, v, params.c_1)
        self.A_inv = rank_one_update_inverse(self.A_inv, v, params.c_1)

        self.csa, self._sigma = csa_update(
            self.csa, z_w, params.mu_w, self._sigma, params.n
        )

        self._mean = new_mean
        self._t += 1
        self._last_z = None
        check_finite_vector("mean", self._mean)
        check_finite_vector("p_c", self._p_c)
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.A_inv)):
            raise NumericalFailureError("Cholesky factor contains non-finite entries")
        check_finite_scalar("sigma", self._sigma)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "mean": self._mean,
            "p_c": self._p_c,
            "p_sigma": self.csa.p_sigma,
            "A": self.A,
            "A_inv": self.A_inv,
        }


def optimize(
    problem: ObjectiveProblem,
    mean0: np.ndarray,
    sigma0: float,
    rng: SeededRng,
    termination: Termination,
    params: Optional[CholeskyParams] = None,
    record_every: int = 1,
) -> RunTrace:
    """Run Cholesky-CMA-ES on `problem` until `termination` fires."""
    if params is None:
        params = CholeskyParams.defaults(problem.dimension)
    optimizer = CholeskyCMA(params, mean0, sigma0, rng)
    return run_minimizer(optimizer, problem, termination, record_every=record_every)
