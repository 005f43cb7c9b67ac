"""Benchmark objectives: Sphere, Ellipsoid, rotated Ellipsoid, Rosenbrock.

All functions have optimum value 0. The Ellipsoid weights coordinates by
10^(6(i-1)/(n-1)), a fixed condition number of 1e6 for every n >= 2; its
rotated variant composes with a seeded random orthogonal matrix, which
destroys separability while preserving the level-set geometry.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .core import ObjectiveProblem, SeededRng

# rotation matrices are dense n x n; refuse quadratic storage beyond this
ROTATION_MAX_DIM = 4096

PROBLEM_NAMES = ("sphere", "elli", "elli_rot", "rosenbrock")

# short CLI aliases
PROBLEM_ALIASES = {
    "sphere": "sphere",
    "elli": "elli",
    "ellirot": "elli_rot",
    "elli_rot": "elli_rot",
    "rosen": "rosenbrock",
    "rosenbrock": "rosenbrock",
}


def sphere(x: np.ndarray) -> float:
    """Sum of squares."""
    x = np.asarray(x, dtype=float)
    return float(x @ x)


def _ellipsoid_coeffs(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("ellipsoid needs dimension >= 2")
    return 10.0 ** (6.0 * np.arange(n) / (n - 1))


def ellipsoid(x: np.ndarray) -> float:
    """Separable ellipsoid with axis weights 10^(6(i-1)/(n-1))."""
    x = np.asarray(x, dtype=float)
    return float(_ellipsoid_coeffs(x.size) @ (x * x))


def rotated_ellipsoid(x: np.ndarray, Q: np.ndarray) -> float:
    """Ellipsoid evaluated on Q x."""
    x = np.asarray(x, dtype=float)
    if Q.shape != (x.size, x.size):
        raise ValueError(f"rotation shape {Q.shape} does not match dimension {x.size}")
    return ellipsoid(Q @ x)


def rosenbrock(x: np.ndarray) -> float:
    """Chained Rosenbrock, optimum 0 at (1, ..., 1)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("rosenbrock needs dimension >= 2")
    return float(
        np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2)
    )


@dataclass(frozen=True)
class RotationMatrix:
    """A seeded random orthogonal matrix (Q^T Q = I)."""

    Q: np.ndarray
    seed: int


def random_rotation(n: int, seed: int) -> RotationMatrix:
    """Orthonormalize an n x n standard-normal matrix, deterministically.

    The QR factorization with the sign of the R diagonal folded into Q is
    the Gram-Schmidt orthonormalization of the Gaussian columns. Should
    the columns come out numerically dependent, the draw is retried with
    seed+1, at most 3 times.
    """
    if n < 2:
        raise ValueError("rotation needs dimension >= 2")
    if n > ROTATION_MAX_DIM:
        raise ValueError(
            f"rotation dimension {n} exceeds the {ROTATION_MAX_DIM} storage guard"
        )
    for attempt in range(4):
        gauss = SeededRng(seed + attempt).standard_normal((n, n))
        Q, R = np.linalg.qr(gauss)
        diag = np.diagonal(R)
        if np.all(np.isfinite(Q)) and np.min(np.abs(diag)) > 1e-12 * np.max(np.abs(diag)):
            Q = Q * np.sign(diag)
            Q.flags.writeable = False
            return RotationMatrix(Q=Q, seed=seed)
    raise ValueError(f"could not orthonormalize a random matrix for n={n}, seed={seed}")


_rotation_cache: dict[tuple[int, int], RotationMatrix] = {}
_rotation_lock = threading.Lock()


def get_rotation(n: int, seed: int) -> RotationMatrix:
    """Cached `random_rotation`; the first builder wins, others wait."""
    key = (n, seed)
    with _rotation_lock:
        if key not in _rotation_cache:
            _rotation_cache[key] = random_rotation(n, seed)
        return _rotation_cache[key]


def dump_rotation(rotation: RotationMatrix, path) -> None:
    """Write the matrix as flat text, one row per line, 17 significant digits."""
    np.savetxt(path, rotation.Q, fmt="%.17g")


def make_problem(name: str, n: int, rotation_seed: int = 1) -> ObjectiveProblem:
    """Build an `ObjectiveProblem` with a vectorized batch evaluator."""
    canonical = PROBLEM_ALIASES.get(name)
    if canonical is None:
        raise ValueError(f"unknown problem {name!r}; expected one of {sorted(PROBLEM_ALIASES)}")

    if canonical == "sphere":
        return ObjectiveProblem(
            name="sphere",
            dimension=n,
            evaluate=sphere,
            optimum_value=0.0,
            batch_evaluate=lambda X: np.einsum("ij,ij->i", X, X),
        )
    if canonical == "elli":
        coeffs = _ellipsoid_coeffs(n)
        return ObjectiveProblem(
            name="elli",
            dimension=n,
            evaluate=ellipsoid,
            optimum_value=0.0,
            batch_evaluate=lambda X: (X * X) @ coeffs,
        )
    if canonical == "elli_rot":
        coeffs = _ellipsoid_coeffs(n)
        Q = get_rotation(n, rotation_seed).Q
        return ObjectiveProblem(
            name="elli_rot",
            dimension=n,
            evaluate=lambda x: rotated_ellipsoid(x, Q),
            optimum_value=0.0,
            batch_evaluate=lambda X: (np.square(X @ Q.T)) @ coeffs,
        )
    if n < 2:
        raise ValueError("rosenbrock needs dimension >= 2")
    return ObjectiveProblem(
        name="rosenbrock",
        dimension=n,
        evaluate=rosenbrock,
        optimum_value=0.0,
        batch_evaluate=lambda X: np.sum(
            100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1
        ),
    )
