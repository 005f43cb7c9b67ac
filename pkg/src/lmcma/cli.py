"""Command line interface: `lmcma optimize`, `lmcma timing`, `lmcma aggregate`.

`optimize` runs one algorithm/problem batch over a list of seeds and
writes trace/summary CSVs. Flags can also be supplied through a JSON
config file (`--config`); explicit flags win over file values. The exit
code is 0 when every seed reached the target, 1 when at least one did
not, and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .harness import ExperimentConfig, ParamOverrides

# keys accepted in a --config JSON file; flags override these
CONFIG_KEYS = {
    "algorithm": str,
    "problem": str,
    "n": int,
    "seeds": None,  # list of ints or "a..b" string
    "target_fitness": float,
    "max_evaluations": int,
    "init_range": float,
    "sigma0": float,
    "rotation_seed": int,
    "max_seconds": float,
    "record_every": int,
    "workers": int,
    "output_dir": str,
    "save_final_state": bool,
    "dump_rotation": bool,
    "m": int,
    "n_steps": int,
    "c_1": float,
    "c_sigma": float,
    "d_sigma": float,
    "z_star": float,
}


def parse_seeds(value) -> list[int]:
    """Parse a seed list: '0..10' (inclusive), '1,2,3', '7', or a JSON list."""
    if isinstance(value, list):
        return [int(s) for s in value]
    text = str(value).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _load_config_file(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmcma",
        description="LM-CMA-ES benchmark harness (convergence runs and CPU-time scaling)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="run one algorithm/problem batch over seeds")
    opt.add_argument("--algo", choices=harness.ALGORITHMS, help="algorithm to run")
    opt.add_argument(
        "--fn",
        choices=["sphere", "elli", "ellirot", "rosen"],
        help="objective function",
    )
    opt.add_argument("--n", type=int, help="problem dimension")
    opt.add_argument("--seeds", help="seed list: '0..10', '1,2,3' or '7' (default 0..10)")
    opt.add_argument("--target", type=float, help="target fitness (default 1e-10)")
    opt.add_argument("--max-evals", type=int, help="evaluation budget per seed")
    opt.add_argument("--max-seconds", type=float, help="wall-clock limit per seed")
    opt.add_argument("--out", help="output directory")
    opt.add_argument("--m", type=int, help="direction-vector store capacity (lmcma)")
    opt.add_argument("--nsteps", type=int, help="target iteration spacing of stored vectors (lmcma)")
    opt.add_argument("--c1", type=float, help="rank-one learning rate")
    opt.add_argument("--csigma", type=float, help="step-size learning rate")
    opt.add_argument("--dsigma", type=float, help="step-size damping")
    opt.add_argument("--zstar", type=float, help="PSR target success ratio (lmcma)")
    opt.add_argument("--sigma0", type=float, help="initial step size (default 5)")
    opt.add_argument("--init-range", type=float, help="mean init range (default 5)")
    opt.add_argument("--rotation-seed", type=int, help="seed of the rotation matrix (ellirot)")
    opt.add_argument("--record-every", type=int, help="trace decimation (default 1)")
    opt.add_argument("--workers", type=int, help="parallel seed workers (default 1)")
    opt.add_argument("--config", help="JSON config file; explicit flags win")
    opt.add_argument(
        "--save-final-state",
        action="store_true",
        default=None,
        help="write a resumable LM-CMA state snapshot per seed",
    )
    opt.add_argument(
        "--dump-rotation",
        action="store_true",
        default=None,
        help="write the rotation matrix as flat text (ellirot)",
    )

    tim = sub.add_parser("timing", help="measure internal seconds per evaluation")
    tim.add_argument("--algos", required=True, help="comma-separated algorithms")
    tim.add_argument("--dims", required=True, help="comma-separated ascending dimensions")
    tim.add_argument("--evals", type=int, default=100_000, help="evaluation cap per point")
    tim.add_argument("--out", required=True, help="output CSV file")
    tim.add_argument("--seed", type=int, default=0, help="seed for the timed runs")

    agg = sub.add_parser("aggregate", help="combine summary CSVs into one table")
    agg.add_argument("--out", required=True, help="output CSV file")
    agg.add_argument("summaries", nargs="+", help="summary CSV files")
    return parser


_FN_TO_PROBLEM = {"sphere": "sphere", "elli": "elli", "ellirot": "elli_rot", "rosen": "rosenbrock"}


def _merged(args: argparse.Namespace, key: str, flag_value, default=None):
    if flag_value is not None:
        return flag_value
    if args.file_config and key in args.file_config:
        return args.file_config[key]
    return default


def _cmd_optimize(args: argparse.Namespace) -> int:
    args.file_config = _load_config_file(args.config) if args.config else {}

    algorithm = _merged(args, "algorithm", args.algo)
    problem = _FN_TO_PROBLEM[args.fn] if args.fn else _merged(args, "problem", None)
    n = _merged(args, "n", args.n)
    max_evals = _merged(args, "max_evaluations", args.max_evals)
    out = _merged(args, "output_dir", args.out)
    missing = [
        name
        for name, value in [
            ("--algo", algorithm),
            ("--fn", problem),
            ("--n", n),
            ("--max-evals", max_evals),
            ("--out", out),
        ]
        if value is None
    ]
    if missing:
        print(f"error: missing required options: {', '.join(missing)}", file=sys.stderr)
        return 2

    overrides = ParamOverrides(
        m=_merged(args, "m", args.m),
        n_steps=_merged(args, "n_steps", args.nsteps),
        c_1=_merged(args, "c_1", args.c1),
        c_sigma=_merged(args, "c_sigma", args.csigma),
        d_sigma=_merged(args, "d_sigma", args.dsigma),
        z_star=_merged(args, "z_star", args.zstar),
    )
    try:
        config = ExperimentConfig(
            algorithm=algorithm,
            problem=problem,
            n=int(n),
            max_evaluations=int(max_evals),
            output_dir=Path(out),
            seeds=parse_seeds(_merged(args, "seeds", args.seeds, "0..10")),
            target_fitness=float(_merged(args, "target_fitness", args.target, 1e-10)),
            init_range=float(_merged(args, "init_range", args.init_range, 5.0)),
            sigma0=float(_merged(args, "sigma0", args.sigma0, 5.0)),
            rotation_seed=int(_merged(args, "rotation_seed", args.rotation_seed, 1)),
            max_seconds=_merged(args, "max_seconds", args.max_seconds),
            record_every=int(_merged(args, "record_every", args.record_every, 1)),
            workers=int(_merged(args, "workers", args.workers, 1)),
            overrides=overrides,
            save_final_state=bool(
                _merged(args, "save_final_state", args.save_final_state, False)
            ),
            dump_rotation=bool(_merged(args, "dump_rotation", args.dump_rotation, False)),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    result = harness.run_experiment(config)
    for r in result.results:
        evals = r.evals_to_target if r.evals_to_target is not None else "-"
        print(
            f"seed {r.seed}: {r.status.value}, evals_to_target={evals}, "
            f"final_best={r.final_best:.3e}"
        )
    median = result.median_evals_to_target
    print(f"median evals_to_target: {median if median is not None else '-'}")
    print(f"summary: {config.summary_path()}")
    return 0 if result.all_reached else 1


def _cmd_timing(args: argparse.Namespace) -> int:
    algorithms = [a.strip() for a in args.algos.split(",") if a.strip()]
    dims = [int(d) for d in args.dims.split(",") if d.strip()]
    try:
        report = harness.run_timing(algorithms, dims, args.evals, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    harness.write_timing_csv(report, Path(args.out))
    for row in report.rows:
        print(
            f"{row.algorithm} n={row.n}: {row.seconds_per_evaluation:.3e} s/eval "
            f"({row.evaluations_timed} evals)"
        )
    print(f"timing table: {args.out}")
    return 0


def _cmd_aggregate(args: argparse.Namespace) -> int:
    try:
        rows = harness.aggregate([Path(p) for p in args.summaries])
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    harness.write_aggregate_csv(rows, Path(args.out))
    print(f"aggregate table: {args.out} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "optimize":
        return _cmd_optimize(args)
    if args.command == "timing":
        return _cmd_timing(args)
    return _cmd_aggregate(args)


if __name__ == "__main__":
    sys.exit(main())
