"""Experiment harness: convergence batches, CPU-time scaling, CSV outputs.

A batch (`run_experiment`) runs one algorithm on one problem for a list
of seeds, writes one trace CSV per seed plus a summary CSV with the
per-seed evaluations-to-target and their median, and a JSON sidecar with
the full configuration (the only place timestamps appear, so the CSV
contents are deterministic up to the elapsed-seconds column).

`run_timing` measures optimizer-internal seconds per evaluation on the
separable Ellipsoid: the total wall time of an ask/evaluate/tell loop
minus the separately measured cost of the objective evaluations. Timing
runs are strictly serial and pin the BLAS thread pool to one thread so
the scaling ratios are not distorted by contention.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import benchmarks, cholesky, lmcma, sepcma
from .core import (
    Optimizer,
    RunStatus,
    RunTrace,
    SeededRng,
    Termination,
    run_minimizer,
)

ALGORITHMS = ("lmcma", "cholesky", "sepcma")

TRACE_COLUMNS = ("iteration", "evaluations", "best_fitness", "sigma", "elapsed_seconds")
SUMMARY_COLUMNS = ("algorithm", "function", "n", "seed", "status", "evals_to_target", "final_best")
TIMING_COLUMNS = ("algorithm", "n", "seconds_per_evaluation", "evaluations_timed")
AGGREGATE_COLUMNS = (
    "algorithm",
    "function",
    "n",
    "runs",
    "failures",
    "median_evals_to_target",
    "q25_evals",
    "q75_evals",
)

# timing methodology: the full-matrix baseline gets a smaller evaluation cap
CHOLESKY_TIMING_CAP = 10_000


def lower_median(values: Sequence[float]) -> float:
    """Median with the lower-middle convention for even counts."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class ParamOverrides:
    """Optional per-algorithm parameter overrides (None keeps the default)."""

    m: Optional[int] = None
    n_steps: Optional[int] = None
    c_1: Optional[float] = None
    c_sigma: Optional[float] = None
    d_sigma: Optional[float] = None
    z_star: Optional[float] = None

    def set_fields(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ExperimentConfig:
    """One convergence batch: an algorithm, a problem, a list of seeds."""

    algorithm: str
    problem: str
    n: int
    max_evaluations: int
    output_dir: Path
    seeds: list[int] = field(default_factory=lambda: list(range(11)))
    target_fitness: float = 1e-10
    init_range: float = 5.0
    sigma0: float = 5.0
    rotation_seed: int = 1
    max_seconds: Optional[float] = None
    record_every: int = 1
    workers: int = 1
    overrides: ParamOverrides = field(default_factory=ParamOverrides)
    save_final_state: bool = False
    dump_rotation: bool = False

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.problem = benchmarks.PROBLEM_ALIASES.get(self.problem, self.problem)
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.problem not in benchmarks.PROBLEM_NAMES:
            raise ValueError(
                f"unknown problem {self.problem!r}; expected one of {benchmarks.PROBLEM_NAMES}"
            )
        if self.n < 2:
            raise ValueError(f"dimension must be >= 2, got {self.n}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.max_evaluations < 0:
            raise ValueError("max_evaluations must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.algorithm == "cholesky" and self.n > cholesky.MAX_DIMENSION:
            raise ValueError(
                f"cholesky is limited to n <= {cholesky.MAX_DIMENSION} "
                f"(quadratic memory); got n={self.n}"
            )
        inapplicable = {
            "cholesky": {"m", "n_steps", "z_star"},
            "sepcma": {"m", "n_steps", "z_star", "c_1"},
            "lmcma": set(),
        }[self.algorithm]
        bad = inapplicable & set(self.overrides.set_fields())
        if bad:
            raise ValueError(
                f"overrides {sorted(bad)} do not apply to algorithm {self.algorithm!r}"
            )

    # --- file layout -------------------------------------------------------

    def _stem(self) -> str:
        return f"{self.algorithm}_{self.problem}_n{self.n}"

    def trace_path(self, seed: int) -> Path:
        return self.output_dir / f"trace_{self._stem()}_seed{seed}.csv"

    def state_path(self, seed: int) -> Path:
        return self.output_dir / f"state_{self._stem()}_seed{seed}.bin"

    def summary_path(self) -> Path:
        return self.output_dir / f"summary_{self._stem()}.csv"

    def meta_path(self) -> Path:
        return self.output_dir / f"summary_{self._stem()}.meta.json"


def build_optimizer(
    algorithm: str,
    n: int,
    seed: int,
    sigma0: float,
    init_range: float,
    overrides: ParamOverrides = ParamOverrides(),
) -> Optimizer:
    """Build a seeded optimizer with the mean drawn uniformly per coordinate.

    The first n uniform draws of the seed's stream initialize the mean in
    [-init_range, init_range]^n; all later draws feed candidate sampling,
    so a (config, seed) pair fixes the entire run.
    """
    rng = SeededRng(seed)
    mean0 = rng.uniform(-init_range, init_range, n)
    ov = overrides.set_fields()
    if algorithm == "lmcma":
        params = lmcma.LmcmaParams.defaults(
            n,
            m=ov.get("m"),
            n_steps=ov.get("n_steps"),
            c_1=ov.get("c_1"),
            c_sigma=ov.get("c_sigma", 0.3),
            d_sigma=ov.get("d_sigma", 1.0),
            z_star=ov.get("z_star", 0.25),
        )
        return lmcma.LMCMA(params, mean0, sigma0, rng)
    if algorithm == "cholesky":
        params = cholesky.CholeskyParams.defaults(n)
        params = replace(
            params,
            c_1=ov.get("c_1", params.c_1),
            c_sigma=ov.get("c_sigma", params.c_sigma),
            d_sigma=ov.get("d_sigma", params.d_sigma),
        )
        return cholesky.CholeskyCMA(params, mean0, sigma0, rng)
    if algorithm == "sepcma":
        params = sepcma.SepCmaParams.defaults(n)
        params = replace(
            params,
            c_sigma=ov.get("c_sigma", params.c_sigma),
            d_sigma=ov.get("d_sigma", params.d_sigma),
        )
        return sepcma.SepCMA(params, mean0, sigma0, rng)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def write_trace_csv(trace: RunTrace, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            writer.writerow(
                [
                    rec.iteration,
                    rec.evaluations,
                    f"{rec.best_fitness:.17g}",
                    f"{rec.sigma:.17g}",
                    f"{rec.elapsed_seconds:.6f}",
                ]
            )


@dataclass(frozen=True)
class SeedResult:
    seed: int
    status: RunStatus
    evals_to_target: Optional[int]
    final_best: float
    evaluations: int


def _run_seed(config: ExperimentConfig, seed: int) -> SeedResult:
    """Run one seed, write its trace (and optional state), summarize it."""
    problem = benchmarks.make_problem(config.problem, config.n, config.rotation_seed)
    optimizer = build_optimizer(
        config.algorithm, config.n, seed, config.sigma0, config.init_range, config.overrides
    )
    termination = Termination(
        max_evaluations=config.max_evaluations,
        target_fitness=config.target_fitness,
        max_seconds=config.max_seconds,
    )
    trace = run_minimizer(optimizer, problem, termination, record_every=config.record_every)
    write_trace_csv(trace, config.trace_path(seed))
    if config.save_final_state and config.algorithm == "lmcma":
        lmcma.save_state(optimizer, config.state_path(seed))
    return SeedResult(
        seed=seed,
        status=trace.final_status,
        evals_to_target=trace.evals_to_target(config.target_fitness),
        final_best=trace.best_fitness,
        evaluations=trace.evaluations,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    results: list[SeedResult]

    @property
    def all_reached(self) -> bool:
        return all(r.status is RunStatus.TARGET_REACHED for r in self.results)

    @property
    def median_evals_to_target(self) -> Optional[int]:
        succeeded = [r.evals_to_target for r in self.results if r.evals_to_target is not None]
        if not succeeded:
            return None
        return int(lower_median(succeeded))


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run all seeds of a batch and write trace, summary and meta files."""
    config.validate()
    config.output_dir.mkdir(parents=True, exist_ok=True)

    if config.dump_rotation and config.problem == "elli_rot":
        rotation = benchmarks.get_rotation(config.n, config.rotation_seed)
        benchmarks.dump_rotation(
            rotation,
            config.output_dir / f"rotation_n{config.n}_seed{config.rotation_seed}.txt",
        )

    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_seed, [config] * len(config.seeds), config.seeds))
    else:
        results = [_run_seed(config, seed) for seed in config.seeds]

    result = ExperimentResult(config=config, results=results)
    _write_summary(result)
    _write_meta(config)
    return result


def _write_summary(result: ExperimentResult) -> None:
    config = result.config
    with open(config.summary_path(), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in result.results:
            writer.writerow(
                [
                    config.algorithm,
                    config.problem,
                    config.n,
                    r.seed,
                    r.status.value,
                    r.evals_to_target if r.evals_to_target is not None else "",
                    f"{r.final_best:.17g}",
                ]
            )
        # trailing median row: evals median over successful seeds only
        median = result.median_evals_to_target
        final_median = lower_median([r.final_best for r in result.results])
        writer.writerow(
            [
                config.algorithm,
                config.problem,
                config.n,
                "median",
                "",
                median if median is not None else "",
                f"{final_median:.17g}",
            ]
        )


def _write_meta(config: ExperimentConfig) -> None:
    meta = {
        "schema": 1,
        "algorithm": config.algorithm,
        "function": config.problem,
        "n": config.n,
        "seeds": list(config.seeds),
        "target_fitness": config.target_fitness,
        "max_evaluations": config.max_evaluations,
        "sigma0": config.sigma0,
        "init_range": config.init_range,
        "rotation_seed": config.rotation_seed,
        "record_every": config.record_every,
        "overrides": config.overrides.set_fields(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(config.meta_path(), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- timing ----------------------------------------------------------------


@dataclass(frozen=True)
class TimingRow:
    algorithm: str
    n: int
    seconds_per_evaluation: float
    evaluations_timed: int


@dataclass
class TimingReport:
    rows: list[TimingRow]

    def row(self, algorithm: str, n: int) -> TimingRow:
        for r in self.rows:
            if r.algorithm == algorithm and r.n == n:
                return r
        raise KeyError(f"no timing row for ({algorithm}, {n})")


def _time_point(algorithm: str, n: int, evaluations: int, seed: int) -> TimingRow:
    problem = benchmarks.make_problem("elli", n)
    optimizer = build_optimizer(algorithm, n, seed, sigma0=5.0, init_range=5.0)
    lam = optimizer.population_size
    generations = max(1, math.ceil(evaluations / lam))
    evals_timed = generations * lam

    start = time.perf_counter()
    last = None
    for _ in range(generations):
        candidates = optimizer.ask()
        fitnesses = problem.evaluate_population(candidates)
        optimizer.tell(candidates, fitnesses)
        last = candidates
    total = time.perf_counter() - start

    # objective-only cost on identically shaped data, best of two passes
    eval_only = math.inf
    for _ in range(2):
        t0 = time.perf_counter()
        for _ in range(generations):
            problem.evaluate_population(last)
        eval_only = min(eval_only, time.perf_counter() - t0)

    internal = (total - eval_only) / evals_timed
    if internal <= 0.0:
        raise RuntimeError(
            f"timing subtraction produced non-positive internal cost for "
            f"({algorithm}, n={n}): total={total:.6f}s, eval-only={eval_only:.6f}s"
        )
    return TimingRow(
        algorithm=algorithm,
        n=n,
        seconds_per_evaluation=internal,
        evaluations_timed=evals_timed,
    )


def run_timing(
    algorithms: Sequence[str],
    dims: Sequence[int],
    evals_per_point: int,
    seed: int = 0,
) -> TimingReport:
    """Time optimizer-internal cost per evaluation on the separable Ellipsoid.

    The full-matrix baseline is capped at `CHOLESKY_TIMING_CAP` evaluations
    per point and skipped entirely above its dimension guard.
    """
    for algorithm in algorithms:
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    dims = list(dims)
    if dims != sorted(dims) or len(set(dims)) != len(dims):
        raise ValueError("dims must be strictly ascending")
    if evals_per_point < 1000:
        raise ValueError("evals_per_point must be >= 1000")

    rows = []
    with threadpool_limits(limits=1):
        for algorithm in algorithms:
            for n in dims:
                if algorithm == "cholesky" and n > cholesky.MAX_DIMENSION:
                    continue  # guarded: quadratic memory
                evaluations = evals_per_point
                if algorithm == "cholesky":
                    evaluations = min(evaluations, CHOLESKY_TIMING_CAP)
                rows.append(_time_point(algorithm, n, evaluations, seed))
    return TimingReport(rows=rows)


def write_timing_csv(report: TimingReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMING_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [r.algorithm, r.n, f"{r.seconds_per_evaluation:.9g}", r.evaluations_timed]
            )


# --- aggregation -----------------------------------------------------------


def _read_summary(path: Path) -> tuple[dict, list[dict]]:
    meta_path = path.parent / (path.stem + ".meta.json")
    if not meta_path.exists():
        raise ValueError(f"missing metadata sidecar for {path}: {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(SUMMARY_COLUMNS):
            raise ValueError(f"{path} does not have the summary column layout")
        for row in reader:
            if row["seed"] == "median":
                continue
            rows.append(row)
    return meta, rows


def aggregate(summary_paths: Sequence[Path]) -> list[dict]:
    """Combine summary files into one evals-to-target row per (algorithm, n).

    All inputs must share the objective function and the target fitness.
    The median uses the lower-middle convention and the quartiles the
    'lower' interpolation, both computed over successful seeds only;
    failed seeds are counted in the failures column.
    """
    groups: dict[tuple[str, int], dict] = {}
    shared: Optional[tuple[str, float]] = None
    for path in summary_paths:
        meta, rows = _read_summary(Path(path))
        key_shared = (meta["function"], meta["target_fitness"])
        if shared is None:
            shared = key_shared
        elif shared != key_shared:
            raise ValueError(
                f"summaries mix functions/targets: {shared} vs {key_shared} in {path}"
            )
        for row in rows:
            key = (row["algorithm"], int(row["n"]))
            group = groups.setdefault(
                key, {"function": row["function"], "evals": [], "failures": 0, "runs": 0}
            )
            group["runs"] += 1
            if row["status"] == RunStatus.TARGET_REACHED.value and row["evals_to_target"]:
                group["evals"].append(int(row["evals_to_target"]))
            else:
                group["failures"] += 1

    out = []
    for (algorithm, n) in sorted(groups):
        group = groups[(algorithm, n)]
        evals = sorted(group["evals"])
        if evals:
            median = int(lower_median(evals))
            q25 = int(np.percentile(evals, 25, method="lower"))
            q75 = int(np.percentile(evals, 75, method="lower"))
        else:
            median = q25 = q75 = None
        out.append(
            {
                "algorithm": algorithm,
                "function": group["function"],
                "n": n,
                "runs": group["runs"],
                "failures": group["failures"],
                "median_evals_to_target": median,
                "q25_evals": q25,
                "q75_evals": q75,
            }
        )
    return out


def write_aggregate_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow(
                ["" if row[c] is None else row[c] for c in AGGREGATE_COLUMNS]
            )
