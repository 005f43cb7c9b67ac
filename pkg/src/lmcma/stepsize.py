"""Step-size adaptation rules: CSA, median success rule, population success rule.

All three rules are pure functions over small state records, so they can
be unit-tested against hand-computed values and reused by any of the
optimizers. Success rules compare the current population's fitness values
against the previous generation's; CSA instead compares the length of a
smoothed evolution path against its expectation under random selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import NumericalFailureError, check_finite_scalar, expected_norm


@dataclass
class CsaState:
    """Cumulative step-size adaptation state: path plus its two rates."""

    p_sigma: np.ndarray
    c_sigma: float
    d_sigma: float


def csa_update(
    state: CsaState, z_w: np.ndarray, mu_w: float, sigma: float, n: int
) -> tuple[CsaState, float]:
    """Accumulate the step-size path and rescale sigma.

    The path becomes (1-c_sigma) p + sqrt(c_sigma(2-c_sigma) mu_w) z_w and
    sigma is multiplied by exp((c_sigma/d_sigma)(|p'| / E|N(0,I)| - 1)),
    so a longer-than-expected path grows sigma and a shorter one shrinks it.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    cs = state.c_sigma
    p_new = (1.0 - cs) * state.p_sigma + math.sqrt(cs * (2.0 - cs) * mu_w) * z_w
    norm = float(np.linalg.norm(p_new))
    new_sigma = sigma * math.exp((cs / state.d_sigma) * (norm / expected_norm(n) - 1.0))
    check_finite_scalar("sigma", new_sigma)
    if not np.all(np.isfinite(p_new)):
        raise NumericalFailureError("step-size path contains non-finite entries")
    return replace(state, p_sigma=p_new), new_sigma


def msr_default_index(lam: int) -> int:
    """Default comparison index ceil(0.3 lambda), 1-based."""
    return int(math.ceil(0.3 * lam))


def msr_damping(n: int) -> float:
    """Step-size damping 2(n-1)/n used with the median success rule."""
    return 2.0 * (n - 1.0) / n


def msr_z(
    prev_fitness: Sequence[float],
    cur_fitness: Sequence[float],
    j: Optional[int] = None,
) -> float:
    """Median-success-rule signal in [-(lam+1)/lam, (lam-1)/lam].

    Counts current individuals with fitness <= the j-th best previous
    fitness (ties count as success) and normalizes the count so that a
    successful median individual gives z >= 0.
    """
    prev = np.asarray(prev_fitness, dtype=float)
    cur = np.asarray(cur_fitness, dtype=float)
    if prev.shape != cur.shape or prev.ndim != 1:
        raise ValueError("fitness sequences must be 1-D and of equal length")
    lam = prev.size
    if j is None:
        j = msr_default_index(lam)
    if not 1 <= j <= lam:
        raise ValueError(f"comparison index must be in [1, {lam}], got {j}")
    threshold = np.partition(prev, j - 1)[j - 1]
    k_succ = int(np.count_nonzero(cur <= threshold))
    return (2.0 / lam) * (k_succ - (lam + 1) / 2.0)


def psr_z(
    prev_fitness: Sequence[float],
    cur_fitness: Sequence[float],
    z_star: float,
) -> float:
    """Population-success-rule signal in [-1 - z_star, 1 - z_star].

    Ranks the union of both populations (rank 0 is best; on fitness ties
    previous-generation members rank first, so a tie never counts as a
    success) and returns the mean rank advantage of the current
    population, sum(r_prev - r_cur) / lambda^2, minus the target z_star.
    """
    prev = np.asarray(prev_fitness, dtype=float)
    cur = np.asarray(cur_fitness, dtype=float)
    if prev.shape != cur.shape or prev.ndim != 1:
        raise ValueError("fitness sequences must be 1-D and of equal length")
    if not (np.all(np.isfinite(prev)) and np.all(np.isfinite(cur))):
        raise ValueError("fitness values must be finite")
    lam = prev.size
    mixed = np.concatenate([prev, cur])
    origin = np.concatenate([np.zeros(lam, dtype=np.int64), np.ones(lam, dtype=np.int64)])
    order = np.lexsort((origin, mixed))
    ranks = np.empty(2 * lam, dtype=np.int64)
    ranks[order] = np.arange(2 * lam)
    rank_sum_diff = int(ranks[:lam].sum() - ranks[lam:].sum())
    return rank_sum_diff / float(lam * lam) - z_star


@dataclass
class PsrState:
    """Population-success-rule state: smoothed signal and its parameters.

    `prev_fitness` is absent until one full generation has completed; the
    very first sigma update is therefore skipped and `s` stays 0.
    """

    s: float = 0.0
    c_sigma: float = 0.3
    d_sigma: float = 1.0
    z_star: float = 0.25
    prev_fitness: Optional[np.ndarray] = None


def psr_update_sigma(state: PsrState, z: float, sigma: float) -> tuple[PsrState, float]:
    """Smooth the success signal and rescale sigma by exp(s/d_sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    s_new = (1.0 - state.c_sigma) * state.s + state.c_sigma * z
    new_sigma = sigma * math.exp(s_new / state.d_sigma)
    check_finite_scalar("sigma", new_sigma)
    return replace(state, s=s_new), new_sigma
