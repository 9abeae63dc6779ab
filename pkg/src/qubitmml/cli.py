"""Command-line harness: dataset generation, estimation and the two parameter sweeps.

Every random draw descends from ``--seed`` through task-indexed seed sequences, so output
bytes do not depend on ``--threads`` or on completion order.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .channel import (
    AffineChannel,
    MapLike,
    block_matrix,
    channel_distance,
    choi,
    is_cp,
    max_cp_mixing,
    regularize_channel,
    signed_svd,
)
from .maps import NAMED_MAPS, NprMap, npr_analytic_lambda, unot, unot_optimal
from .mml import MlConfig, MlResult, mml_estimate, npr_lambda_from_estimate
from .tomography import (
    CoverageError,
    linear_inversion,
    load_dataset,
    save_dataset,
    simulate_clicks,
    simulate_npr_dataset,
    standard_plan,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_COVERAGE = 0, 1, 2, 3

DEFAULT_N_GRID = (18, 90, 180, 900, 1800, 9000, 18000)
DEFAULT_THETAS = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
CELLS = 18  # 6 standard states x 3 axes


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers


def parse_map(text: str) -> MapLike:
    """Named map, ``npr:THETA``, or 12 comma-separated numbers (t, then T row-major)."""
    text = text.strip()
    if text in NAMED_MAPS:
        return NAMED_MAPS[text]()
    if text.startswith("npr:"):
        try:
            return NprMap(float(text[4:]))
        except ValueError as exc:
            raise UsageError(f"bad NPR map {text!r}: {exc}") from None
    parts = text.split(",")
    if len(parts) != 12:
        raise UsageError(f"unknown map {text!r}: expected one of {sorted(NAMED_MAPS)}, npr:THETA, or 12 numbers")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"malformed channel literal {text!r}") from None
    if not np.all(np.isfinite(values)):
        raise UsageError(f"channel literal {text!r} has non-finite entries")
    return AffineChannel.from_params(values)


def parse_channel(text: str) -> AffineChannel:
    m = parse_map(text)
    if not isinstance(m, AffineChannel):
        raise UsageError(f"{text!r} is not an affine channel")
    return m


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


# ---------------------------------------------------------------- experiments


def _task_seeds(seed: int, *key: int) -> list[np.random.SeedSequence]:
    """Data, fit and distance seeds for one task, fixed by its grid position."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key)).spawn(3)


def _pool_map(fn: Callable, tasks: Sequence, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


@dataclass(frozen=True)
class UnotRun:
    distance_to_unot: float
    distance_to_optimal: float
    min_choi_eigenvalue: float


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    runs: tuple[UnotRun, ...]

    def summary(self) -> tuple[float, float, float, float]:
        d = np.array([r.distance_to_unot for r in self.runs])
        q25, med, q75 = np.percentile(d, [25, 50, 75])
        return float(med), float(q25), float(q75), float(np.median([r.distance_to_optimal for r in self.runs]))


def _unot_task(args) -> UnotRun:
    seed, i, j, n, samples, cfg = args
    data_ss, fit_ss, dist_ss = _task_seeds(seed, i, j)
    ds = simulate_clicks(unot(), standard_plan(n // CELLS), np.random.default_rng(data_ss))
    res = mml_estimate(ds, cfg, np.random.default_rng(fit_ss))
    # both references see the same sample of pure states
    d_unot = channel_distance(res.channel, unot(), samples, np.random.default_rng(dist_ss))
    d_opt = channel_distance(res.channel, unot_optimal(), samples, np.random.default_rng(dist_ss))
    return UnotRun(d_unot.distance, d_opt.distance, res.min_choi_eigenvalue)


def run_unot_convergence(
    grid: Sequence[int], repeats: int, seed: int, samples: int = 10_000, cfg: MlConfig | None = None, threads: int = 1
) -> list[ConvergenceRow]:
    """U-NOT estimates on equal-allocation datasets of each size in ``grid``."""
    cfg = cfg or MlConfig()
    bad = [n for n in grid if n < CELLS or n % CELLS]
    if bad:
        raise UsageError(f"click counts must be positive multiples of {CELLS}: {bad}")
    tasks = [(seed, i, j, n, samples, cfg) for i, n in enumerate(grid) for j in range(repeats)]
    runs = _pool_map(_unot_task, tasks, threads)
    return [ConvergenceRow(n, tuple(runs[i * repeats : (i + 1) * repeats])) for i, n in enumerate(grid)]


@dataclass(frozen=True)
class NprRun:
    lam: float
    signed_singular_values: tuple[float, float, float]
    min_choi_eigenvalue: float


@dataclass(frozen=True)
class NprRow:
    theta: float
    lambda_analytic: float
    runs: tuple[NprRun, ...]

    @property
    def lambda_est_mean(self) -> float:
        return float(np.mean([r.lam for r in self.runs]))

    @property
    def lambda_est_std(self) -> float:
        lam = [r.lam for r in self.runs]
        return float(np.std(lam, ddof=1)) if len(lam) > 1 else 0.0


def _npr_task(args) -> NprRun:
    seed, i, j, theta, clicks, cfg = args
    data_ss, fit_ss, _ = _task_seeds(seed, i, j)
    res = mml_estimate(simulate_npr_dataset(theta, clicks, np.random.default_rng(data_ss)), cfg, np.random.default_rng(fit_ss))
    lam = tuple(float(v) for v in signed_svd(res.channel).lam)
    return NprRun(npr_lambda_from_estimate(res.channel), lam, res.min_choi_eigenvalue)


def run_npr_curve(
    thetas: Sequence[float], repeats: int, seed: int, clicks: int = 1800, cfg: MlConfig | None = None, threads: int = 1
) -> list[NprRow]:
    """Analytic and estimated NPR contraction for each strength in ``thetas``."""
    cfg = cfg or MlConfig()
    tasks = [(seed, i, j, float(th), clicks, cfg) for i, th in enumerate(thetas) for j in range(repeats)]
    runs = _pool_map(_npr_task, tasks, threads)
    return [
        NprRow(float(th), npr_analytic_lambda(float(th)), tuple(runs[i * repeats : (i + 1) * repeats]))
        for i, th in enumerate(thetas)
    ]


def ellipsoid_axes(theta: float, seed: int, clicks: int = 1800, cfg: MlConfig | None = None) -> NprRun:
    # stream key outside any grid index used by run_npr_curve
    return _npr_task((seed, 2**31, 0, float(theta), clicks, cfg or MlConfig()))


# ---------------------------------------------------------------- output


def _num(x: float) -> str:
    return format(float(x), ".10g")


def _metadata(args) -> dict:
    return {"version": __version__, "command": args.command_line, "seed": args.seed}


def _csv_header(args) -> list[str]:
    return [f"# {key}: {value}" for key, value in _metadata(args).items()]


def _emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")


def _emit_json(args, payload: dict) -> None:
    _emit(args, json.dumps({"meta": _metadata(args), **payload}, indent=2) + "\n")


def _channel_json(ch: AffineChannel) -> dict:
    return {"block_matrix": block_matrix(ch).tolist(), "min_choi_eigenvalue": is_cp(ch).min_eigenvalue}


# ---------------------------------------------------------------- commands


def _ml_config(args) -> MlConfig:
    overrides = dict(args.mml or {})
    if args.restarts is not None:
        overrides["restarts"] = args.restarts
    known = {f.name for f in fields(MlConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise UsageError(f"unknown estimator settings: {sorted(unknown)}")
    try:
        return MlConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_gen_data(args) -> int:
    if not args.out or args.out == "-":
        raise UsageError("gen-data needs --out FILE")
    m = parse_map(args.map)
    rng = np.random.default_rng(args.seed)
    if isinstance(m, NprMap):
        ds = simulate_npr_dataset(m.theta, args.npr_states, rng, seed=args.seed)
    else:
        if args.shots_per_cell < 1:
            raise UsageError("--shots-per-cell must be at least 1")
        ds = simulate_clicks(m, standard_plan(args.shots_per_cell), rng, seed=args.seed, source_map=args.map)
    save_dataset(ds, args.out)
    print(f"N={ds.n_total} seed={args.seed}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    try:
        ds = load_dataset(args.data)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    # coverage problems surface before the expensive fit
    raw = linear_inversion(ds) if args.raw else None
    res: MlResult = mml_estimate(ds, _ml_config(args), np.random.default_rng(args.seed))
    report = {
        "block_matrix": block_matrix(res.channel).tolist(),
        "log_likelihood": res.log_likelihood,
        "min_choi_eigenvalue": res.min_choi_eigenvalue,
        "signed_singular_values": signed_svd(res.channel).lam.tolist(),
        "distance_to": None,
    }
    if args.distance_to:
        ref = parse_map(args.distance_to)
        d = channel_distance(res.channel, ref, args.distance_samples, np.random.default_rng([args.seed, 1]))
        report["distance_to"] = {"reference": args.distance_to, "distance": d.distance, "stderr": d.stderr}
    if raw is not None:
        report["raw"] = {**_channel_json(raw), "cp": bool(is_cp(raw))}
    _emit_json(args, report)
    return EXIT_OK


def cmd_unot_convergence(args) -> int:
    rows = run_unot_convergence(args.grid, args.repeats, args.seed, args.distance_samples, _ml_config(args), args.threads)
    lines = _csv_header(args) + ["N,median_distance_to_unot,q25,q75,median_distance_to_optimal"]
    for row in rows:
        lines.append(",".join([str(row.n)] + [_num(v) for v in row.summary()]))
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_npr_curve(args) -> int:
    cfg = _ml_config(args)
    rows = run_npr_curve(args.thetas, args.repeats, args.seed, args.clicks, cfg, args.threads)
    lines = _csv_header(args)
    if args.ellipsoid is not None:
        run = ellipsoid_axes(args.ellipsoid, args.seed, args.clicks, cfg)
        axes = ",".join(_num(v) for v in run.signed_singular_values)
        lines.append(f"# ellipsoid theta={_num(args.ellipsoid)} signed_singular_values={axes}")
    lines.append("theta,lambda_analytic,lambda_est_mean,lambda_est_std,repeats")
    for row in rows:
        vals = [row.theta, row.lambda_analytic, row.lambda_est_mean, row.lambda_est_std]
        lines.append(",".join([_num(v) for v in vals] + [str(len(row.runs))]))
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_channel(args) -> int:
    tool = args.tool
    if tool == "choi":
        omega = choi(parse_channel(args.map))
        payload = {"choi_real": omega.real.tolist(), "choi_imag": omega.imag.tolist()}
    elif tool == "cp-check":
        check = is_cp(parse_channel(args.map), args.tol)
        payload = {"cp": bool(check.cp), "min_eigenvalue": check.min_eigenvalue}
    elif tool == "regularize":
        if not 0.0 <= args.k <= 1.0:
            raise UsageError("--k must lie in [0, 1]")
        payload = _channel_json(regularize_channel(parse_channel(args.map), args.k))
    elif tool == "max-mixing":
        payload = {"k_max": max_cp_mixing(parse_channel(args.map), args.tol)}
    else:
        d = channel_distance(parse_map(args.a), parse_map(args.b), args.samples, np.random.default_rng(args.seed))
        payload = {"distance": d.distance, "stderr": d.stderr}
    _emit_json(args, payload)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # accepted both before and after the subcommand
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default, help="root seed (drawn from OS entropy and logged if omitted)")
    p.add_argument("--out", default=default, help="output file (default: standard output)")
    p.add_argument("--config", default=default, help="JSON file of option defaults; flags override it")
    p.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS if suppress else 1, help="worker processes")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qubitmml", parents=[_global_options(False)], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_options(True)

    def add(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(mml=None)
        return p

    def estimator_flags(p):
        p.add_argument("--restarts", type=_positive_int, default=None, help="optimizer starts")

    p = add("gen-data", "simulate a click dataset")
    p.add_argument("--map", required=True)
    p.add_argument("--shots-per-cell", type=int, default=100)
    p.add_argument("--npr-states", type=_positive_int, default=1800)
    p.set_defaults(func=cmd_gen_data)

    p = add("estimate", "maximum-likelihood CP estimate of a dataset")
    p.add_argument("data")
    p.add_argument("--raw", action="store_true", help="also report the unconstrained linear inversion")
    p.add_argument("--distance-to", default=None)
    p.add_argument("--distance-samples", type=_positive_int, default=10_000)
    estimator_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = add("unot-convergence", "distance of U-NOT estimates versus click count")
    p.add_argument("--grid", type=_int_list, default=list(DEFAULT_N_GRID))
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--distance-samples", type=_positive_int, default=10_000)
    estimator_flags(p)
    p.set_defaults(func=cmd_unot_convergence)

    p = add("npr-curve", "estimated versus analytic NPR contraction")
    p.add_argument("--thetas", type=_float_list, default=list(DEFAULT_THETAS))
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--clicks", type=_positive_int, default=1800)
    p.add_argument("--ellipsoid", type=float, default=None, metavar="THETA")
    estimator_flags(p)
    p.set_defaults(func=cmd_npr_curve)

    p = add("channel", "single-channel utilities")
    tools = p.add_subparsers(dest="tool", required=True)
    for name in ("choi", "cp-check", "regularize", "max-mixing"):
        t = tools.add_parser(name, parents=[common])
        t.add_argument("--map", required=True)
        if name in ("cp-check", "max-mixing"):
            t.add_argument("--tol", type=float, default=1e-9)
        if name == "regularize":
            t.add_argument("--k", type=float, required=True)
    t = tools.add_parser("distance", parents=[common])
    t.add_argument("--a", required=True)
    t.add_argument("--b", required=True)
    t.add_argument("--samples", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_channel)
    return parser


def _explicit_options(argv: list[str]) -> set[str]:
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    return given


def _normalized_command(argv: list[str]) -> str:
    # --out and --threads do not change results, so they stay out of the recorded command
    kept, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--out", "--threads"):
            skip = True
            continue
        if tok.startswith(("--out=", "--threads=")):
            continue
        kept.append(tok)
    return shlex.join(["qubitmml", *kept])


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            config_given = _explicit_options(argv)
            args = _load_config(args, config_given)
        if args.seed is None:
            args.seed = int(np.random.SeedSequence().entropy % 2**63)
            log.warning("no --seed given; using %d", args.seed)
        args.command_line = _normalized_command(argv)
        if args.command in ("unot-convergence", "npr-curve"):
            key = "grid" if args.command == "unot-convergence" else "thetas"
            if not getattr(args, key):
                raise UsageError(f"--{key} must not be empty")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qubitmml: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CoverageError as exc:
        print(f"qubitmml: coverage error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except OSError as exc:
        print(f"qubitmml: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def _load_config(args: argparse.Namespace, given: set[str]) -> argparse.Namespace:
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "mml":
            if not isinstance(value, dict):
                raise UsageError("config 'mml' must be an object")
            args.mml = value
        elif dest in ("command", "tool", "func", "config") or not hasattr(args, dest):
            raise UsageError(f"config key {key!r} does not apply to {args.command}")
        elif dest not in given:
            if dest in ("grid", "thetas") and (not isinstance(value, list) or not value):
                raise UsageError(f"config {key!r} must be a non-empty list")
            setattr(args, dest, value)
    return args


if __name__ == "__main__":
    sys.exit(main())
