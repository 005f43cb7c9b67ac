"""Limited-memory CMA-ES.

Instead of an explicit n-by-n Cholesky factor, the sampling transform is
reconstructed on the fly from m stored pairs of vectors: evolution paths
p_c and their duals v (the inverse-factor images of p_c), each with two
scalar coefficients fixed at insertion time. Both the factor-vector
product (`az`) and the inverse-factor-vector product (`ainvz`) then cost
O(m n) arithmetic and the whole optimizer state is Theta(m n) memory,
which keeps the algorithm practical for n in the tens of thousands.

Stored pairs are selected by `update_set`, which spaces the m survivors
roughly evenly in iteration distance, at most `n_steps` apart. Step size
is adapted by the population success rule from `stepsize`.
"""

from __future__ import annotations

import math
import struct
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
from .stepsize import PsrState, psr_update_sigma, psr_z


@dataclass
class DirectionStore:
    """Fixed-capacity store of (evolution path, dual vector) pairs.

    Rows of `paths` and `duals` hold the stored p_c and v vectors; `fwd`
    and `inv` hold their scalar coefficients for the forward and inverse
    reconstruction. `order` lists the currently valid row indices oldest
    first and `stamps` records the iteration at which each row was
    written. Rows above `count` are uninitialized.
    """

    capacity: int
    dimension: int
    paths: np.ndarray
    duals: np.ndarray
    fwd: np.ndarray
    inv: np.ndarray
    stamps: np.ndarray
    order: list[int]
    count: int = 0

    @classmethod
    def empty(cls, capacity: int, dimension: int) -> "DirectionStore":
        if capacity < 1:
            raise ValueError(f"store capacity must be >= 1, got {capacity}")
        return cls(
            capacity=capacity,
            dimension=dimension,
            paths=np.zeros((capacity, dimension)),
            duals=np.zeros((capacity, dimension)),
            fwd=np.zeros(capacity),
            inv=np.zeros(capacity),
            stamps=np.zeros(capacity, dtype=np.int64),
            order=[],
        )


def update_set(store: DirectionStore, t: int, n_steps: int) -> int:
    """Pick the store row to overwrite at iteration t and restamp it.

    While the store is not full the next free row is appended. Once full,
    the newer element of the closest-in-iteration consecutive pair is
    recycled (first such pair on ties); if even the smallest gap is
    already >= n_steps the oldest row is recycled instead. The chosen row
    is rotated to the newest position of `order` and stamped with t; the
    caller overwrites its vectors.
    """
    if store.count < store.capacity:
        row = store.count
        store.order.append(row)
        store.count += 1
        store.stamps[row] = t
        return row

    order = store.order
    m = store.capacity
    if m == 1:
        store.stamps[order[0]] = t
        return order[0]

    gaps = [int(store.stamps[order[i + 1]] - store.stamps[order[i]]) for i in range(m - 1)]
    smallest = min(gaps)
    pos = gaps.index(smallest) + 1  # newer element of the closest pair
    if smallest >= n_steps:
        pos = 0  # pairs already spaced out enough: recycle the oldest
    if pos != m - 1:
        row = order.pop(pos)
        order.append(row)
    row = order[-1]
    store.stamps[row] = t
    return row


def az(z: np.ndarray, store: DirectionStore, a: float) -> np.ndarray:
    """Apply the reconstructed Cholesky factor to z (rows of z if 2-D).

    Unrolls the factor recursion A_k = a A_{k-1} + fwd_k paths_k duals_k^T
    over the stored pairs oldest to newest, so every stored dual is dotted
    with the untransformed input:

        A z = a^count z + sum_k a^(count-1-k) fwd_k (duals_k . z) paths_k.

    An empty store returns z. Together with `ainvz` this forms an exact
    inverse pair as long as no stored pair has been replaced; afterwards
    both sides are the intended limited-memory approximations.
    """
    z = np.asarray(z, dtype=float)
    count = len(store.order)
    if count == 0:
        return z.copy()
    sel = np.asarray(store.order)
    decay = a ** np.arange(count - 1, -1, -1, dtype=float)
    k = (z @ store.duals[sel].T) * (store.fwd[sel] * decay)
    out = k @ store.paths[sel]
    out += (a**count) * z
    return out


def ainvz(z: np.ndarray, store: DirectionStore, c: float) -> np.ndarray:
    """Apply the reconstructed inverse Cholesky factor to z.

    Walks the stored pairs oldest to newest, dotting each stored dual
    with the progressively transformed vector (the inverse recursion is
    a left bracket, so it genuinely acts on the running result):
    x <- c x - inv_j (duals_j . x) duals_j. An empty store returns z.
    """
    x = np.array(z, dtype=float, copy=True)
    for row in store.order:
        k = store.inv[row] * (x @ store.duals[row])
        x *= c
        x -= np.multiply.outer(k, store.duals[row])
    return x


def reconstruction_coefficients(c_1: float, v_sq: float) -> tuple[float, float]:
    """Forward and inverse scalar coefficients for a stored pair.

    For a dual vector with squared norm u = v_sq:
      fwd = (sqrt(1-c_1)/u) (sqrt(1 + c_1 u/(1-c_1)) - 1)
      inv = (1/(sqrt(1-c_1) u)) (1 - 1/sqrt(1 + c_1 u/(1-c_1)))
    These satisfy c*fwd - inv*(a + fwd*u) = 0 with a = sqrt(1-c_1) and
    c = 1/a, which is what makes ainvz(az(z)) = z for a fresh pair.
    """
    if v_sq <= 0.0:
        raise ValueError("squared dual norm must be positive")
    a = math.sqrt(1.0 - c_1)
    root = math.sqrt(1.0 + (c_1 / (1.0 - c_1)) * v_sq)
    return (a / v_sq) * (root - 1.0), (1.0 / (a * v_sq)) * (1.0 - 1.0 / root)


@dataclass(frozen=True)
class LmcmaParams:
    """LM-CMA-ES strategy parameters.

    Defaults follow the standard large-n tuning: lambda = m = n_steps =
    4 + floor(3 ln n), c_c = 1/m, c_1 = 1/(10 ln(n+1)), and a population
    success rule with c_sigma = 0.3, d_sigma = 1, target ratio 0.25.
    """

    n: int
    weights: RecombinationWeights
    m: int
    n_steps: int
    c_c: float
    c_1: float
    c_sigma: float = 0.3
    d_sigma: float = 1.0
    z_star: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.c_1 < 1.0:
            raise ValueError(f"c_1 must be in (0, 1), got {self.c_1}")
        if not 0.0 < self.c_c <= 1.0:
            raise ValueError(f"c_c must be in (0, 1], got {self.c_c}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")

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
    def defaults(
        cls,
        n: int,
        lam: Optional[int] = None,
        m: Optional[int] = None,
        n_steps: Optional[int] = None,
        c_c: Optional[float] = None,
        c_1: Optional[float] = None,
        c_sigma: float = 0.3,
        d_sigma: float = 1.0,
        z_star: float = 0.25,
    ) -> "LmcmaParams":
        if lam is None:
            lam = default_lambda(n)
        if m is None:
            m = default_lambda(n)
        if n_steps is None:
            n_steps = m
        if c_c is None:
            c_c = 1.0 / m
        if c_1 is None:
            c_1 = 1.0 / (10.0 * math.log(n + 1.0))
        return cls(
            n=n,
            weights=make_weights(lam),
            m=m,
            n_steps=n_steps,
            c_c=c_c,
            c_1=c_1,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            z_star=z_star,
        )


class LMCMA(Optimizer):
    """The (mu/mu_w, lambda) limited-memory CMA-ES as an ask/tell optimizer."""

    def __init__(
        self,
        params: LmcmaParams,
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
        self.store = DirectionStore.empty(params.m, params.n)
        self.psr = PsrState(c_sigma=params.c_sigma, d_sigma=params.d_sigma, z_star=params.z_star)
        self._t = 0
        # scaling constants of the forward and inverse reconstructions
        self._a = math.sqrt(1.0 - params.c_1)
        self._c = 1.0 / self._a

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
        return self._mean + self._sigma * az(z, self.store, self._a)

    def tell(self, candidates: np.ndarray, fitnesses: np.ndarray) -> None:
        params = self.params
        fitnesses = np.asarray(fitnesses, dtype=float)
        if candidates.shape != (params.lam, params.n) or fitnesses.shape != (params.lam,):
            raise ValueError("candidates/fitnesses do not match the population shape")
        if np.isnan(fitnesses).any():
            raise NumericalFailureError("fitness values contain NaN")

        order = np.argsort(fitnesses, kind="stable")
        new_mean = params.weights.w @ candidates[order[: params.mu]]

        c_c = params.c_c
        self._p_c = (1.0 - c_c) * self._p_c + math.sqrt(
            c_c * (2.0 - c_c) * params.mu_w
        ) * (new_mean - self._mean) / self._sigma

        v = ainvz(self._p_c, self.store, self._c)
        v_sq = float(v @ v)
        if v_sq > 0.0:
            # with a zero path the factor update is pure scaling, which the
            # constant a in az() already provides; store nothing then
            row = update_set(self.store, self._t, params.n_steps)
            self.store.paths[row] = self._p_c
            self.store.duals[row] = v
            self.store.fwd[row], self.store.inv[row] = reconstruction_coefficients(
                params.c_1, v_sq
            )

        if self.psr.prev_fitness is not None:
            z = psr_z(self.psr.prev_fitness, fitnesses, self.psr.z_star)
            self.psr, self._sigma = psr_update_sigma(self.psr, z, self._sigma)
        self.psr.prev_fitness = fitnesses.copy()

        self._mean = new_mean
        self._t += 1
        check_finite_vector("mean", self._mean)
        check_finite_vector("p_c", self._p_c)
        check_finite_scalar("sigma", self._sigma)

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {
            "mean": self._mean,
            "p_c": self._p_c,
            "paths": self.store.paths,
            "duals": self.store.duals,
            "fwd": self.store.fwd,
            "inv": self.store.inv,
            "stamps": self.store.stamps,
        }
        if self.psr.prev_fitness is not None:
            arrays["prev_fitness"] = self.psr.prev_fitness
        return arrays


def optimize(
    problem: ObjectiveProblem,
    mean0: np.ndarray,
    sigma0: float,
    rng: SeededRng,
    termination: Termination,
    params: Optional[LmcmaParams] = None,
    record_every: int = 1,
) -> RunTrace:
    """Run LM-CMA-ES on `problem` until `termination` fires."""
    if params is None:
        params = LmcmaParams.defaults(problem.dimension)
    optimizer = LMCMA(params, mean0, sigma0, rng)
    return run_minimizer(optimizer, problem, termination, record_every=record_every)


# --- state snapshots -------------------------------------------------------
#
# Flat little-endian binary, format version 1:
#   magic  8 bytes  b"LMCMAST1"
#   int64  n, lam, m, n_steps, t, count
#   float64  c_c, c_1, c_sigma, d_sigma, z_star, sigma, s
#   int64  has_prev (0 or 1)
#   uint64 x 6  rng: PCG64 state (hi, lo), inc (hi, lo), has_uint32, uinteger
#   int64  seed
#   float64[n]      mean
#   float64[n]      p_c
#   float64[m*n]    paths, row-major
#   float64[m*n]    duals, row-major
#   float64[m]      fwd
#   float64[m]      inv
#   int64[m]        stamps
#   int64[count]    order, oldest first
#   float64[lam]    prev_fitness (only when has_prev = 1)

_STATE_MAGIC = b"LMCMAST1"
_U64 = 1 << 64


def save_state(optimizer: LMCMA, path) -> None:
    """Write a resumable snapshot of the optimizer state to `path`."""
    p = optimizer.params
    st = optimizer.store
    rng_state = optimizer.rng.state
    pcg = rng_state["state"]
    has_prev = optimizer.psr.prev_fitness is not None
    with open(path, "wb") as fh:
        fh.write(_STATE_MAGIC)
        fh.write(
            struct.pack(
                "<6q", p.n, p.lam, p.m, p.n_steps, optimizer.generation, st.count
            )
        )
        fh.write(
            struct.pack(
                "<7d",
                p.c_c,
                p.c_1,
                p.c_sigma,
                p.d_sigma,
                p.z_star,
                optimizer.sigma,
                optimizer.psr.s,
            )
        )
        fh.write(struct.pack("<q", int(has_prev)))
        fh.write(
            struct.pack(
                "<6Q",
                pcg["state"] >> 64,
                pcg["state"] % _U64,
                pcg["inc"] >> 64,
                pcg["inc"] % _U64,
                rng_state["has_uint32"],
                rng_state["uinteger"],
            )
        )
        fh.write(struct.pack("<q", optimizer.rng.seed))
        optimizer.mean.astype("<f8").tofile(fh)
        optimizer._p_c.astype("<f8").tofile(fh)
        st.paths.astype("<f8").tofile(fh)
        st.duals.astype("<f8").tofile(fh)
        st.fwd.astype("<f8").tofile(fh)
        st.inv.astype("<f8").tofile(fh)
        st.stamps.astype("<i8").tofile(fh)
        np.asarray(st.order, dtype="<i8").tofile(fh)
        if has_prev:
            optimizer.psr.prev_fitness.astype("<f8").tofile(fh)


def load_state(path) -> LMCMA:
    """Rebuild an LMCMA optimizer from a snapshot written by `save_state`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _STATE_MAGIC:
            raise ValueError(f"not an LM-CMA state file (magic {magic!r})")
        n, lam, m, n_steps, t, count = struct.unpack("<6q", fh.read(48))
        c_c, c_1, c_sigma, d_sigma, z_star, sigma, s = struct.unpack("<7d", fh.read(56))
        (has_prev,) = struct.unpack("<q", fh.read(8))
        st_hi, st_lo, inc_hi, inc_lo, has_uint32, uinteger = struct.unpack(
            "<6Q", fh.read(48)
        )
        (seed,) = struct.unpack("<q", fh.read(8))

        def read_f8(count_):
            return np.fromfile(fh, dtype="<f8", count=count_)

        mean = read_f8(n)
        p_c = read_f8(n)
        paths = read_f8(m * n).reshape(m, n)
        duals = read_f8(m * n).reshape(m, n)
        fwd = read_f8(m)
        inv = read_f8(m)
        stamps = np.fromfile(fh, dtype="<i8", count=m)
        order = np.fromfile(fh, dtype="<i8", count=count).tolist()
        prev = read_f8(lam) if has_prev else None

    params = LmcmaParams.defaults(
        n, lam=lam, m=m, n_steps=n_steps, c_c=c_c, c_1=c_1,
        c_sigma=c_sigma, d_sigma=d_sigma, z_star=z_star,
    )
    rng = SeededRng(seed)
    rng.state = {
        "bit_generator": "PCG64",
        "state": {"state": (st_hi << 64) + st_lo, "inc": (inc_hi << 64) + inc_lo},
        "has_uint32": int(has_uint32),
        "uinteger": int(uinteger),
    }
    optimizer = LMCMA(params, mean, sigma, rng)
    optimizer._p_c = p_c
    optimizer._t = int(t)
    optimizer.psr.s = s
    optimizer.psr.prev_fitness = prev
    store = optimizer.store
    store.paths = paths
    store.duals = duals
    store.fwd = fwd
    store.inv = inv
    store.stamps = stamps.astype(np.int64)
    store.order = [int(r) for r in order]
    store.count = int(count)
    return optimizer
