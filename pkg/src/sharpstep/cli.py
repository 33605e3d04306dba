"""Command-line harness: generate instances, run solves, estimate constants,
sweep parameters, and verify the analytic battery.

Configs are flat UTF-8 ``key = value`` files with ``#`` comments and
namespaced keys (``problem.d``, ``schedule.alpha``, ...); unknown keys are
rejected.  Trace CSVs carry the exact header
``iter,objective,distance,step_size,subgrad_norm`` with 17-significant-digit
floats, LF line endings, and ``NA`` for a missing distance column; every
output file is written atomically.  Exit codes: 0 success, 2 config error,
3 oracle failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .analysis import (
    estimate_params,
    fit_linear_rate,
    grid_points_1d,
    run_verification_battery,
    sample_near_solutions,
)
from .numerics import RNG_ALGORITHM, RNG_NORMAL_TRANSFORM, RngStream, sample_gaussian
from .problems import (
    AnalyticInstance,
    CovarianceInstance,
    CovarianceSpec,
    InstanceFormatError,
    PhaseRetrievalInstance,
    PhaseRetrievalSpec,
    STREAM_ESTIMATOR,
    STREAM_INIT_DIRECTION,
    gen_cov_estimation,
    gen_phase_retrieval,
    load_instance,
    make_analytic,
    save_instance,
)
from .solver import (
    Constant,
    Geometric,
    OracleError,
    Polyak,
    SolveConfig,
    solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_VERIFY = 4

CSV_HEADER = "iter,objective,distance,step_size,subgrad_norm"
SUMMARY_HEADER = "axis_value,status,final_distance,fitted_q,iters"


class ConfigError(Exception):
    """Invalid configuration, config file, or command usage."""


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_KEY_PARSERS = {
    "problem.kind": str,
    "problem.file": str,
    "problem.name": str,
    "problem.d": int,
    "problem.m": int,
    "problem.r": int,
    "problem.seed": int,
    "problem.corrupted": _parse_bool,
    "problem.p": float,
    "problem.s": float,
    "schedule.kind": str,
    "schedule.alpha": float,
    "schedule.lam": float,
    "schedule.q": float,
    "schedule.min_value": float,
    "init.delta": float,
    "init.radius": float,
    "init.seed": int,
    "init.stream": int,
    "solve.max_iters": int,
    "solve.dist_tol": float,
    "solve.gap_tol": float,
    "solve.zero_subgrad": float,
    "out": str,
}


def parse_config_text(text):
    """Parse ``key = value`` lines into a typed dict; unknown keys,
    duplicates and malformed lines are errors."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        try:
            cfg[key] = _KEY_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return cfg


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return f"{float(v):.17g}"


def write_trace_csv(path, trace, norm_scale=1.0):
    """Serialize a trace; distances are divided by ``norm_scale``."""
    rows = [CSV_HEADER]
    for k in range(len(trace)):
        if trace.distance is None:
            dcol = "NA"
        else:
            dcol = _fmt(trace.distance[k] / norm_scale)
        rows.append(
            f"{k},{_fmt(trace.objective[k])},{dcol},"
            f"{_fmt(trace.step_size[k])},{_fmt(trace.subgrad_norm[k])}"
        )
    _atomic_write(path, "\n".join(rows) + "\n")


def _write_meta(path, pairs):
    _atomic_write(path, "".join(f"{k} = {v}\n" for k, v in pairs))


# ---------------------------------------------------------------------------
# Config -> objects
# ---------------------------------------------------------------------------

class _Bundle:
    """Problem plus the reporting conventions tied to its kind."""

    def __init__(self, label, problem, norm_scale, anchor, init_scale, instance):
        self.label = label
        self.problem = problem
        self.norm_scale = norm_scale    # distances in CSVs are dist/norm_scale
        self.anchor = anchor            # reference point for x0 construction
        self.init_scale = init_scale    # x0 = anchor + delta*init_scale*u
        self.instance = instance


def _bundle_from_instance(inst):
    if isinstance(inst, PhaseRetrievalInstance):
        scale = float(np.linalg.norm(inst.xbar))
        label = (f"phase_retrieval d={inst.spec.d} m={inst.spec.m} "
                 f"corrupted={int(inst.spec.corrupted)} seed={inst.spec.seed}")
        return _Bundle(label, inst.problem, scale, inst.xbar.copy(), scale, inst)
    if isinstance(inst, CovarianceInstance):
        scale = float(np.linalg.norm(inst.Xbar))
        label = (f"covariance d={inst.spec.d} r={inst.spec.r} m={inst.spec.m} "
                 f"corrupted={int(inst.spec.corrupted)} seed={inst.spec.seed}")
        return _Bundle(label, inst.problem, scale, inst.Xbar.reshape(-1).copy(),
                       scale, inst)
    if isinstance(inst, AnalyticInstance):
        label = f"analytic name={inst.name}"
        return _Bundle(label, inst.problem, 1.0,
                       np.asarray(inst.problem.solutions[0], dtype=np.float64),
                       inst.tube_radius, inst)
    raise ConfigError(f"unsupported instance type {type(inst).__name__}")


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def build_instance(cfg, seed_override=None):
    """Construct (or load) the instance described by the ``problem.*`` keys."""
    if "problem.file" in cfg:
        try:
            return _bundle_from_instance(load_instance(cfg["problem.file"]))
        except (InstanceFormatError, OSError) as exc:
            raise ConfigError(f"cannot load instance: {exc}") from None
    kind = _require(cfg, "problem.kind")
    seed = seed_override if seed_override is not None else cfg.get("problem.seed", 0)
    try:
        if kind == "phase_retrieval":
            spec = PhaseRetrievalSpec(
                d=_require(cfg, "problem.d"),
                m=_require(cfg, "problem.m"),
                corrupted=cfg.get("problem.corrupted", False),
                p=cfg.get("problem.p", 0.1),
                s=cfg.get("problem.s", 10.0),
                seed=seed,
            )
            return _bundle_from_instance(gen_phase_retrieval(spec))
        if kind == "covariance":
            spec = CovarianceSpec(
                d=_require(cfg, "problem.d"),
                r=_require(cfg, "problem.r"),
                m=_require(cfg, "problem.m"),
                corrupted=cfg.get("problem.corrupted", False),
                p=cfg.get("problem.p", 0.1),
                s=cfg.get("problem.s", 10.0),
                seed=seed,
            )
            return _bundle_from_instance(gen_cov_estimation(spec))
        if kind == "analytic":
            return _bundle_from_instance(make_analytic(_require(cfg, "problem.name")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown problem kind {kind!r}")


def build_schedule(cfg):
    kind = _require(cfg, "schedule.kind")
    try:
        if kind == "polyak":
            return Polyak(min_value=cfg.get("schedule.min_value"))
        if kind == "constant":
            return Constant(alpha=_require(cfg, "schedule.alpha"))
        if kind == "geometric":
            return Geometric(lam=_require(cfg, "schedule.lam"),
                             q=_require(cfg, "schedule.q"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown schedule kind {kind!r}")


def build_solve_config(cfg):
    try:
        return SolveConfig(
            max_iters=cfg.get("solve.max_iters", 500),
            dist_tol=cfg.get("solve.dist_tol", 0.0),
            gap_tol=cfg.get("solve.gap_tol", 0.0),
            zero_subgrad_tol=cfg.get("solve.zero_subgrad"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def initial_point(bundle, cfg, seed_override=None):
    """x0 = anchor + delta * scale * u with u uniform on the sphere.

    ``scale`` is the ground-truth norm for generated instances and the tube
    radius for analytic ones; ``init.radius`` overrides delta*scale with an
    absolute offset.
    """
    delta = cfg.get("init.delta", 0.25)
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"init.delta must be in (0, 1), got {delta}")
    problem_seed = seed_override if seed_override is not None \
        else cfg.get("problem.seed", 0)
    dir_seed = cfg.get("init.seed", problem_seed)
    stream = cfg.get("init.stream", STREAM_INIT_DIRECTION)
    u = sample_gaussian(RngStream(dir_seed, stream), bundle.problem.dim)
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ConfigError("degenerate direction sample; change init.seed")
    radius = cfg.get("init.radius", delta * bundle.init_scale)
    return bundle.anchor + (radius / norm) * u


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(cfg, out_path, seed_override=None):
    bundle = build_instance(cfg, seed_override)
    inst = bundle.instance
    save_instance(out_path, inst)
    n_corrupted = getattr(inst, "n_corrupted", 0)
    print(f"{bundle.label} corrupted_count={n_corrupted} -> {out_path}")
    return EXIT_OK


def cmd_run(cfg, out_path, seed_override=None):
    bundle = build_instance(cfg, seed_override)
    schedule = build_schedule(cfg)
    solve_cfg = build_solve_config(cfg)
    x0 = initial_point(bundle, cfg, seed_override)
    try:
        trace = solve(bundle.problem, schedule, x0, solve_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_trace_csv(out_path, trace, bundle.norm_scale)
    final = (trace.distance[-1] / bundle.norm_scale
             if trace.distance is not None else None)
    meta = [
        ("sharpstep", __version__),
        ("backend", BACKEND),
        ("rng", f"{RNG_ALGORITHM}+{RNG_NORMAL_TRANSFORM}"),
        ("problem", bundle.label),
        ("schedule", repr(schedule)),
        ("init.delta", cfg.get("init.delta", 0.25)),
        ("init.seed", cfg.get("init.seed", cfg.get("problem.seed", 0))),
        ("solve.max_iters", solve_cfg.max_iters),
        ("iterations", len(trace) - 1),
        ("status", trace.status),
        ("final_distance", "NA" if final is None else _fmt(final)),
        ("note", "desk-scale budgets; distances normalized by ground-truth norm"),
    ]
    for w in trace.warnings:
        meta.append(("warning", w))
    _write_meta(str(out_path) + ".meta", meta)
    print(f"{bundle.label} status={trace.status} iters={len(trace) - 1} "
          f"final_distance={'NA' if final is None else _fmt(final)} -> {out_path}")
    return EXIT_OK


def cmd_estimate(instance_path, samples, radius, grid, pair_gap, seed):
    try:
        inst = load_instance(instance_path)
    except (InstanceFormatError, OSError) as exc:
        raise ConfigError(f"cannot load instance: {exc}") from None
    bundle = _bundle_from_instance(inst)
    problem = bundle.problem
    rng = RngStream(seed, STREAM_ESTIMATOR)
    if grid is not None:
        if problem.dim != 1:
            raise ConfigError("--grid applies only to 1-D instances")
        lo, hi, n = grid
        points = grid_points_1d(lo, hi, int(n))
    else:
        points = sample_near_solutions(problem, radius, samples, rng)
    est = estimate_params(problem, points=points, rng=rng, pair_gap=pair_gap)
    print(f"instance: {bundle.label}")
    print(f"mu_hat  = {est.mu:.12g}   (upper bound on the sampled region)")
    print(f"rho_hat = {est.rho:.12g}   (lower bound)")
    print(f"L_hat   = {est.L:.12g}   (lower bound)")
    print(f"tau_hat = {est.tau:.12g}")
    print(f"samples: points={est.n_points} pairs={est.n_pairs} "
          f"radius={est.radius} source='{est.source}'")
    return EXIT_OK


def _sanitize(value):
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in str(value))


def cmd_sweep(cfg, axis_key, axis_values, out_dir, seed_override=None):
    if axis_key not in _KEY_PARSERS:
        raise ConfigError(f"unknown axis key {axis_key!r}")
    os.makedirs(out_dir, exist_ok=True)
    summary = [SUMMARY_HEADER]
    for value in axis_values:
        row_cfg = dict(cfg)
        try:
            row_cfg[axis_key] = _KEY_PARSERS[axis_key](value)
        except ValueError as exc:
            summary.append(f"{value},config-error,NA,NA,NA")
            print(f"sweep {axis_key}={value}: config error: {exc}", file=sys.stderr)
            continue
        trace_path = os.path.join(out_dir, f"run_{_sanitize(value)}.csv")
        try:
            bundle = build_instance(row_cfg, seed_override)
            schedule = build_schedule(row_cfg)
            solve_cfg = build_solve_config(row_cfg)
            x0 = initial_point(bundle, row_cfg, seed_override)
            try:
                trace = solve(bundle.problem, schedule, x0, solve_cfg)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        except ConfigError as exc:
            summary.append(f"{value},config-error,NA,NA,NA")
            print(f"sweep {axis_key}={value}: config error: {exc}", file=sys.stderr)
            continue
        except OracleError as exc:
            summary.append(f"{value},oracle-failure,NA,NA,NA")
            print(f"sweep {axis_key}={value}: oracle failure: {exc}", file=sys.stderr)
            continue
        write_trace_csv(trace_path, trace, bundle.norm_scale)
        if trace.distance is not None:
            final = _fmt(trace.distance[-1] / bundle.norm_scale)
        else:
            final = "NA"
        try:
            fitted = _fmt(fit_linear_rate(trace).q)
        except ValueError:
            fitted = "NA"
        summary.append(f"{value},{trace.status},{final},{fitted},{len(trace) - 1}")
        print(f"sweep {axis_key}={value}: status={trace.status} "
              f"final_distance={final} fitted_q={fitted}")
    _atomic_write(os.path.join(out_dir, "summary.csv"), "\n".join(summary) + "\n")
    return EXIT_OK


def cmd_verify(out_path=None):
    checks = run_verification_battery()
    lines = [c.line() for c in checks]
    for line in lines:
        print(line)
    if out_path:
        _atomic_write(out_path, "\n".join(lines) + "\n")
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the problem seed")
    common.add_argument("--config", type=str, default=None,
                        help="path to a key = value config file")
    common.add_argument("--out", type=str, default=None,
                        help="output path (file, or directory for sweep)")

    parser = argparse.ArgumentParser(
        prog="sharpstep",
        description="Projected subgradient methods for sharp weakly convex problems",
    )
    parser.add_argument("--version", action="version",
                        version=f"sharpstep {__version__} (kernels: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common],
                   help="generate an instance file from the problem.* keys")
    sub.add_parser("run", parents=[common],
                   help="run one solve and write the trace CSV")

    est = sub.add_parser("estimate", parents=[common],
                         help="estimate (mu, rho, L, tau) for an instance file")
    est.add_argument("instance", type=str, help="path to an instance file")
    est.add_argument("--samples", type=int, default=10000)
    est.add_argument("--radius", type=float, default=1.0)
    est.add_argument("--pair-gap", type=float, default=1e-3)
    est.add_argument("--grid", type=str, default=None, metavar="LO,HI,N",
                     help="use an even 1-D grid instead of sphere sampling "
                          "(write --grid=-2,2,2001 for negative bounds)")

    sw = sub.add_parser("sweep", parents=[common],
                        help="run one solve per axis value plus a summary CSV")
    sw.add_argument("--axis", type=str, required=True, metavar="KEY=V1,V2,...",
                    help="config key and comma-separated values to sweep")

    sub.add_parser("verify", parents=[common],
                   help="run the lemma/theorem checks on the analytic battery")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "verify":
            return cmd_verify(args.out)

        if args.command == "estimate":
            grid = None
            if args.grid is not None:
                parts = args.grid.split(",")
                if len(parts) != 3:
                    raise ConfigError("--grid expects LO,HI,N")
                try:
                    grid = (float(parts[0]), float(parts[1]), int(parts[2]))
                except ValueError as exc:
                    raise ConfigError(f"bad --grid value: {exc}") from None
            return cmd_estimate(args.instance, args.samples, args.radius,
                                grid, args.pair_gap,
                                args.seed if args.seed is not None else 0)

        if args.config is None:
            raise ConfigError(f"{args.command} requires --config")
        cfg = load_config(args.config)
        out = args.out if args.out is not None else cfg.get("out")
        if out is None:
            raise ConfigError(f"{args.command} requires --out (or an 'out' config key)")

        if args.command == "gen":
            return cmd_gen(cfg, out, args.seed)
        if args.command == "run":
            return cmd_run(cfg, out, args.seed)
        if args.command == "sweep":
            key, _, values = args.axis.partition("=")
            if not values:
                raise ConfigError("--axis expects KEY=V1,V2,...")
            return cmd_sweep(cfg, key.strip(), [v.strip() for v in values.split(",")],
                             out, args.seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
