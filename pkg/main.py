import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime

import numpy as np

from analysis import NODE_SCHEMES, format_mse_table, mse_table, write_mse_table
from codec import Scheme
from config import (
    CDF_CSV,
    DEFAULT_DEGREE,
    DEFAULT_LR_ITERATIONS,
    DEFAULT_PARTS,
    DEFAULT_SEED,
    DEFAULT_STRAGGLERS,
    DEFAULT_WORKERS,
    LOG_FORMAT,
    LOG_LEVEL,
    MANIFEST_JSON,
    MSE_TABLE_CSV,
    RNG_ALGORITHM,
    SCENARIO_DIR,
    SIN_GRID,
    SIN_INTERVAL,
    TRAINING_LOG_CSV,
    TRIALS_CSV,
    env_seed,
)
from errors import BriError, ConfigError, DatasetError
from interp_core import theorem1_bound
from lr import (
    CodedRegression,
    LrConfig,
    load_dataset_csv,
    synthetic_regression,
    theorem2_bound,
    theorem2_sweep,
    training_thresholds,
    write_training_log,
)
from sim import SimScenario, Simulator, improvement_table, write_cdf_csv, write_trials_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

LR_SCHEMES = {"bri": Scheme.BRI.value, "uncoded": Scheme.UNCODED.value, "lcc": Scheme.LCC.value,
              "ep": Scheme.EP.value, "matdot": Scheme.MATDOT.value}


class UsageError(Exception):
    """Flag combination rejected after parsing"""


def setup_logging(out_dir="."):
    """Setup logging to file and console"""
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(out_dir, f'bri_run_{datetime.now().strftime("%Y%m%d")}.log')),
            logging.StreamHandler()
        ],
        force=True,
    )
    return logging.getLogger(__name__)


def parse_int_list(text):
    """'10,15,20' or '0..9' or a mix of both; ranges are inclusive"""
    values = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                values.extend(range(int(lo), int(hi) + 1))
            elif part:
                values.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty integer list")
    return values


def parse_float_pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def parse_shape(text):
    try:
        rows, cols = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}")
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError("shape must be positive")
    return rows, cols


def resolve_seed(flag_seed, config_seed):
    """--seed beats BRI_SEED beats the config file"""
    if flag_seed is not None:
        return flag_seed
    from_env = env_seed()
    return from_env if from_env is not None else config_seed


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, subcommand, seed, artifacts, config_path=None):
    manifest = {
        "subcommand": subcommand,
        "config_path": config_path,
        "seed": seed,
        "output_dir": os.path.abspath(out_dir),
        "artifacts": {os.path.basename(p): sha256_file(p) for p in artifacts},
        "rng": RNG_ALGORITHM,
        "timestamp": datetime.now().isoformat(timespec="seconds"),
    }
    path = os.path.join(out_dir, MANIFEST_JSON)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return path


def cmd_interp(args):
    bad = [(n, d) for n in args.n for d in args.d if d >= n or d < 0]
    if bad:
        n, d = bad[0]
        raise UsageError(f"--d {d} needs 0 <= d < n for --n {n}")

    print(f"📊 Sin interpolation on [{args.interval[0]}, {args.interval[1]}], {args.nodes} nodes")
    reports = mse_table(args.n, args.d, tuple(args.interval), args.grid, args.nodes)
    path = write_mse_table(reports, os.path.join(args.out, MSE_TABLE_CSV))
    print(format_mse_table(reports))
    write_manifest(args.out, "interp", None, [path])
    print(f"✓ Wrote {len(reports)} rows to {path}")
    return EXIT_OK


def cmd_simulate(args):
    scenario = SimScenario.load(args.config)
    seed = resolve_seed(args.seed, scenario.seed)
    scenario = replace(scenario, seed=seed, trials=args.trials or scenario.trials)

    print(f"🔄 {scenario.name}: N={scenario.N}, m={scenario.m}, S={scenario.S}, {scenario.trials} trials")
    simulator = Simulator(scenario)
    if args.wallclock is not None:
        records = []
        for trial in range(scenario.trials):
            records.extend(simulator.run_wallclock_trial(trial, args.wallclock))
    else:
        records = simulator.run()

    trials_path = write_trials_csv(records, os.path.join(args.out, TRIALS_CSV))
    cdf_path = write_cdf_csv(records, os.path.join(args.out, CDF_CSV))
    write_manifest(args.out, "simulate", seed, [trials_path, cdf_path], config_path=args.config)

    if Scheme.BRI.value in scenario.schemes:
        for row in improvement_table(records):
            direction = "📈" if row["improvement"] > 0 else "📉"
            print(f"   {direction} BRI vs {row['scheme']} @ CDF={row['quantile']}: {row['improvement']:+.1%}")
    print(f"✓ Wrote {len(records)} trial records to {trials_path}")
    return EXIT_OK


def cmd_lr(args):
    seed = resolve_seed(args.seed, DEFAULT_SEED)
    if args.data:
        A, y = load_dataset_csv(args.data)
    else:
        rows, cols = args.synthetic
        A, y, _ = synthetic_regression(rows, cols, parts=args.m + 1, seed=seed)

    config = LrConfig(parts=args.m + 1, d=args.d, learning_rate=args.eta, iterations=args.iters,
                      N=args.N, S=args.S, seed=seed)
    scheme = LR_SCHEMES[args.scheme]
    threshold = training_thresholds([scheme], config)[scheme]

    print(f"📍 Training {A.shape[0]}x{A.shape[1]} regression with {scheme}, N={args.N}, S={args.S}")
    trainer = CodedRegression(A, y, config)
    state, log = trainer.train_scheme(scheme, threshold)
    path = write_training_log(log, os.path.join(args.out, TRAINING_LOG_CSV))
    write_manifest(args.out, "lr", seed, [path], config_path=args.data)
    print(f"   📊 Final loss {state.loss_history[-1]:.6g}, "
          f"virtual time {log[-1]['wall_or_virtual_time_s']:.6g}s")
    print(f"✓ Wrote training log to {path}")
    return EXIT_OK


def cmd_bounds(args):
    d1, d2 = args.norms
    bound = theorem2_bound(args.N, args.S, args.d, d1, d2)
    branch = "even" if (args.N - args.S) % 2 == 0 else "odd"
    print(f"Straggler bound (N={args.N}, S={args.S}, d={args.d}, {branch} branch): {bound:.6g}")

    if args.n_points is not None:
        a, b = args.interval
        spacing = (b - a) / (args.n_points - 1)
        t1 = theorem1_bound(args.d, args.n_points, a, b, spacing, d1, d2)
        print(f"Interpolation bound ({args.n_points} equispaced nodes on [{a}, {b}]): {t1:.6g}")

    if args.check:
        seed = resolve_seed(args.seed, DEFAULT_SEED)
        rows = theorem2_sweep(N=args.N, draws=args.draws, seed=seed)
        violations = sum(r["violations"] for r in rows)
        for r in rows:
            mark = "✓" if r["violations"] == 0 else "✗"
            print(f"   {mark} S={r['S']}, d={r['d']}: max error {r['max_error']:.3e} <= bound {r['bound']:.3e}")
        print(f"{'✓' if violations == 0 else '✗'} {violations} bound violations over {args.draws} draws per cell")
        if violations:
            return EXIT_RUNTIME
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bri", description="Barycentric rational coded computing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    interp = sub.add_parser("interp", help="sin interpolation MSE table")
    interp.add_argument("--n", type=parse_int_list, default=[10, 15, 20, 25], help="node counts, e.g. 10,15,20,25")
    interp.add_argument("--d", type=parse_int_list, default=list(range(10)), help="blending degrees, e.g. 0..9")
    interp.add_argument("--interval", type=parse_float_pair, default=SIN_INTERVAL,
                        help="a,b (write --interval=-8,8 for negative bounds)")
    interp.add_argument("--grid", type=int, default=SIN_GRID, help="test grid points (>= 100)")
    interp.add_argument("--nodes", choices=NODE_SCHEMES, default="equispaced")
    interp.set_defaults(func=cmd_interp)

    simulate = sub.add_parser("simulate", help="straggler simulation over a scenario file")
    simulate.add_argument("--config", default=os.path.join(SCENARIO_DIR, "scenario1.json"),
                          help="JSON scenario (keys N, m, S, schemes, trials, seed, d, block_rows, block_cols, "
                               "task, thresholds, delay{base, flop_seconds, jitter, overhead, extra_dist, "
                               "extra_params}, k_policy{kind, value}, node_scheme, name)")
    simulate.add_argument("--trials", type=int, help="override the scenario trial count")
    simulate.add_argument("--wallclock", type=float, metavar="SCALE",
                          help="run real threads, sleeping SCALE x the sampled delays")
    simulate.set_defaults(func=cmd_simulate)

    lr = sub.add_parser("lr", help="gradient-coded linear regression")
    source = lr.add_mutually_exclusive_group(required=True)
    source.add_argument("--synthetic", type=parse_shape, metavar="ROWSxCOLS")
    source.add_argument("--data", help="headerless CSV, label in the last column")
    lr.add_argument("--iters", type=int, default=DEFAULT_LR_ITERATIONS)
    lr.add_argument("--eta", type=float, help="learning rate (default 1/lambda_max)")
    lr.add_argument("--scheme", choices=sorted(LR_SCHEMES), default="bri")
    lr.add_argument("--N", type=int, default=DEFAULT_WORKERS)
    lr.add_argument("--m", type=int, default=DEFAULT_PARTS - 1, help="row blocks minus one")
    lr.add_argument("--S", type=int, default=DEFAULT_STRAGGLERS)
    lr.add_argument("--d", type=int, default=DEFAULT_DEGREE)
    lr.set_defaults(func=cmd_lr)

    bounds = sub.add_parser("bounds", help="interpolation and straggler error bounds")
    bounds.add_argument("--N", type=int, default=DEFAULT_WORKERS)
    bounds.add_argument("--S", type=int, default=DEFAULT_STRAGGLERS)
    bounds.add_argument("--d", type=int, default=1)
    bounds.add_argument("--norms", type=parse_float_pair, default=(1.0, 1.0),
                        help="sup norms of the (d+1)-th and (d+2)-th derivatives")
    bounds.add_argument("--n-points", type=int, help="also print the equispaced interpolation bound")
    bounds.add_argument("--interval", type=parse_float_pair, default=SIN_INTERVAL)
    bounds.add_argument("--check", action="store_true", help="run the empirical sweep")
    bounds.add_argument("--draws", type=int, default=100)
    bounds.set_defaults(func=cmd_bounds)

    for p in (interp, simulate, lr, bounds):
        p.add_argument("--seed", type=int, help="overrides BRI_SEED and the config seed")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    log = setup_logging(args.out)

    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DatasetError, OSError) as e:
        log.error(f"Input error: {e}")
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BriError, FloatingPointError, np.linalg.LinAlgError) as e:
        log.error(f"Run failed: {e}")
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
