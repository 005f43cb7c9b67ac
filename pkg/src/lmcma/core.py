"""Shared optimizer infrastructure: problems, randomness, termination, traces.

All three evolution strategies in this package are non-elitist
(mu/mu_w, lambda) minimizers built on the same contracts defined here:
an `ObjectiveProblem` to minimize, a `SeededRng` for reproducible
sampling, a `Termination` rule, and the ask/tell `Optimizer` interface
driven by `run_minimizer`.
"""

from __future__ import annotations

import abc
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np


class NumericalFailureError(RuntimeError):
    """Raised when optimizer state or fitness values become non-finite."""


class RunStatus(Enum):
    """Why a run stopped. Values double as the CSV status column."""

    TARGET_REACHED = "TargetReached"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TIME_EXHAUSTED = "TimeExhausted"
    SIGMA_UNDERFLOW = "SigmaUnderflow"
    NUMERICAL_FAILURE = "NumericalFailure"


class SeededRng:
    """Deterministic random source for one optimizer run.

    Wraps numpy's PCG64 generator. Standard-normal draws use the
    ziggurat transform of uniform draws as implemented by
    `numpy.random.Generator.standard_normal`; the same 64-bit seed
    reproduces the identical stream for a given numpy version.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, shape) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def uniform(self, low: float, high: float, size: int) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    @property
    def state(self) -> dict:
        return self._generator.bit_generator.state

    @state.setter
    def state(self, value: dict) -> None:
        self._generator.bit_generator.state = value


def sample_standard_normal_vector(rng: SeededRng, n: int) -> np.ndarray:
    """Draw n independent standard-normal coordinates, advancing rng."""
    if n < 1:
        raise ValueError(f"vector length must be >= 1, got {n}")
    return rng.standard_normal(n)


def default_lambda(n: int) -> int:
    """Default population size 4 + floor(3 ln n)."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return 4 + int(math.floor(3.0 * math.log(n)))


def expected_norm(n: int) -> float:
    """Expected length of an n-dimensional standard-normal vector.

    Uses the approximation sqrt(n) * (1 - 1/(4n) + 1/(21n^2)).
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))


@dataclass(frozen=True)
class RecombinationWeights:
    """Log-decreasing recombination weights over the mu best candidates.

    w_i is proportional to ln(mu+1) - ln(i) for i = 1..mu, normalized to
    sum to one; mu = floor(lambda/2) and mu_w = 1 / sum(w_i^2) is the
    effective selection mass.
    """

    lam: int
    mu: int
    w: np.ndarray
    mu_w: float


def make_weights(lam: int) -> RecombinationWeights:
    """Build recombination weights for population size lam (>= 2)."""
    if lam < 2:
        raise ValueError(f"population size must be >= 2, got {lam}")
    mu = lam // 2
    raw = math.log(mu + 1.0) - np.log(np.arange(1, mu + 1, dtype=float))
    w = raw / raw.sum()
    w.flags.writeable = False
    mu_w = 1.0 / float(np.sum(w * w))
    return RecombinationWeights(lam=lam, mu=mu, w=w, mu_w=mu_w)


@dataclass
class ObjectiveProblem:
    """A deterministic scalar objective to minimize.

    `evaluate` maps one coordinate vector to a finite fitness value and
    must be pure (same input, same output), which makes population
    evaluation safe to batch or parallelize. `batch_evaluate`, when
    given, evaluates a (k, n) matrix of row candidates in one call and
    must agree with `evaluate` row by row.
    """

    name: str
    dimension: int
    evaluate: Callable[[np.ndarray], float]
    optimum_value: Optional[float] = None
    batch_evaluate: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def evaluate_population(self, candidates: np.ndarray) -> np.ndarray:
        if self.batch_evaluate is not None:
            return np.asarray(self.batch_evaluate(candidates), dtype=float)
        return np.array([self.evaluate(x) for x in candidates], dtype=float)


@dataclass
class Termination:
    """Stopping conditions; at least one must be set.

    The evaluation budget is charged one full population per iteration,
    while the target-fitness check is applied per individual evaluation
    so that evaluations-to-target is exact within one evaluation.
    """

    max_evaluations: int
    target_fitness: Optional[float] = 1e-10
    max_seconds: Optional[float] = None
    min_sigma: Optional[float] = None

    def __post_init__(self):
        # max_evaluations is mandatory, so at least one condition is always set
        if self.max_evaluations < 0:
            raise ValueError("max_evaluations must be non-negative")
        if self.max_seconds is not None and self.max_seconds < 0:
            raise ValueError("max_seconds must be non-negative")
        if self.min_sigma is not None and self.min_sigma <= 0:
            raise ValueError("min_sigma must be positive")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    evaluations: int
    best_fitness: float
    sigma: float
    elapsed_seconds: float


@dataclass
class RunTrace:
    """Per-iteration run records plus the final stopping status.

    `best_fitness` is best-so-far over all evaluations performed, so it
    is non-increasing, and `evaluations` is strictly increasing.
    """

    records: list[TraceRecord] = field(default_factory=list)
    final_status: RunStatus = RunStatus.BUDGET_EXHAUSTED

    @property
    def evaluations(self) -> int:
        return self.records[-1].evaluations if self.records else 0

    @property
    def best_fitness(self) -> float:
        return self.records[-1].best_fitness if self.records else math.inf

    def evals_to_target(self, target: float) -> Optional[int]:
        """Evaluation count at the first record with best fitness <= target."""
        for rec in self.records:
            if rec.best_fitness <= target:
                return rec.evaluations
        return None


class Optimizer(abc.ABC):
    """Ask/tell interface shared by LM-CMA-ES, Cholesky-CMA-ES and sep-CMA-ES.

    `ask` samples a (lambda, n) matrix of candidates; `tell` consumes the
    same candidates with their fitness values (aligned by row index) and
    updates the search distribution. One instance is single-threaded;
    independent instances never share mutable state.
    """

    @property
    @abc.abstractmethod
    def dimension(self) -> int: ...

    @property
    @abc.abstractmethod
    def population_size(self) -> int: ...

    @property
    @abc.abstractmethod
    def mean(self) -> np.ndarray: ...

    @property
    @abc.abstractmethod
    def sigma(self) -> float: ...

    @property
    @abc.abstractmethod
    def generation(self) -> int: ...

    @abc.abstractmethod
    def ask(self) -> np.ndarray: ...

    @abc.abstractmethod
    def tell(self, candidates: np.ndarray, fitnesses: np.ndarray) -> None: ...

    @abc.abstractmethod
    def state_arrays(self) -> dict[str, np.ndarray]:
        """All persistent numpy buffers of the optimizer state, by name."""

    def state_nbytes(self) -> int:
        return sum(a.nbytes for a in self.state_arrays().values())


def check_finite_vector(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError(f"{name} contains non-finite entries")


def check_finite_scalar(name: str, x: float) -> None:
    if not math.isfinite(x):
        raise NumericalFailureError(f"{name} is non-finite: {x!r}")


def run_minimizer(
    optimizer: Optimizer,
    problem: ObjectiveProblem,
    termination: Termination,
    record_every: int = 1,
) -> RunTrace:
    """Drive an ask/tell optimizer until a stopping condition fires.

    Records one trace entry per `record_every` generations (plus always
    the final one). When the target is hit mid-generation the run stops
    at that evaluation and the remaining candidates of the generation are
    not charged to the trace.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    if problem.dimension != optimizer.dimension:
        raise ValueError(
            f"problem dimension {problem.dimension} does not match "
            f"optimizer dimension {optimizer.dimension}"
        )

    lam = optimizer.population_size
    target = termination.target_fitness
    start = time.perf_counter()
    trace = RunTrace()
    best = math.inf
    evaluations = 0
    iteration = 0

    def record(evals: int, fitness: float) -> None:
        # keep evaluations strictly increasing even when decimating
        if trace.records and trace.records[-1].evaluations >= evals:
            return
        trace.records.append(
            TraceRecord(
                iteration=iteration,
                evaluations=evals,
                best_fitness=fitness,
                sigma=optimizer.sigma,
                elapsed_seconds=time.perf_counter() - start,
            )
        )

    while True:
        if evaluations + lam > termination.max_evaluations:
            trace.final_status = RunStatus.BUDGET_EXHAUSTED
            break
        if (
            termination.max_seconds is not None
            and time.perf_counter() - start >= termination.max_seconds
        ):
            trace.final_status = RunStatus.TIME_EXHAUSTED
            break
        if termination.min_sigma is not None and optimizer.sigma < termination.min_sigma:
            trace.final_status = RunStatus.SIGMA_UNDERFLOW
            break

        candidates = optimizer.ask()
        fitnesses = problem.evaluate_population(candidates)
        if np.isnan(fitnesses).any():
            evaluations += lam
            record(evaluations, best)
            trace.final_status = RunStatus.NUMERICAL_FAILURE
            break

        if target is not None and best > target:
            hits = fitnesses <= target
            if hits.any():
                k = int(np.argmax(hits))
                evaluations += k + 1
                best = min(best, float(fitnesses[: k + 1].min()))
                record(evaluations, best)
                trace.final_status = RunStatus.TARGET_REACHED
                break

        evaluations += lam
        best = min(best, float(fitnesses.min()))
        try:
            optimizer.tell(candidates, fitnesses)
        except NumericalFailureError:
            record(evaluations, best)
            trace.final_status = RunStatus.NUMERICAL_FAILURE
            break
        iteration += 1
        if iteration % record_every == 0:
            record(evaluations, best)

    if evaluations > 0:
        record(evaluations, best)
    return trace
