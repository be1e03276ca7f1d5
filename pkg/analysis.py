"""Error metrics, operation-count models and the interpolation error tables."""

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np
import pandas as pd

from config import SIN_GRID, SIN_INTERVAL
from errors import BriError, DegreeError, ShapeMismatchError
from interp_core import FhInterpolant, OpCounter, berrut_eval, fh_eval, fh_eval_many, theorem1_bound

logger = logging.getLogger(__name__)

NODE_SCHEMES = ("equispaced", "chebyshev2")


@dataclass(frozen=True)
class ErrorReport:
    n: int
    d: int
    mse: float
    max_abs: float
    node_scheme: str = "equispaced"
    interval: tuple = SIN_INTERVAL
    grid: int = SIN_GRID


@dataclass(frozen=True)
class ComplexityCounts:
    encode_per_worker: int
    encode_total: int
    decode_master: int
    master_to_worker: int
    worker_to_master: int


def mse(estimate, truth):
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if est.shape != ref.shape:
        raise ShapeMismatchError(f"shapes differ: {est.shape} vs {ref.shape}")
    if est.size == 0:
        raise ShapeMismatchError("empty inputs")
    return float(np.mean((est - ref) ** 2))


def relative_frobenius_error(estimates, truths):
    """sqrt(sum ||est_i - ref_i||_F^2) / sqrt(sum ||ref_i||_F^2)"""
    est = np.asarray(estimates, dtype=float)
    ref = np.asarray(truths, dtype=float)
    if est.shape != ref.shape:
        raise ShapeMismatchError(f"shapes differ: {est.shape} vs {ref.shape}")
    scale = np.linalg.norm(ref)
    err = np.linalg.norm(est - ref)
    return float(err / scale) if scale > 0 else float(err)


def sample_nodes(n, interval, node_scheme="equispaced"):
    a, b = interval
    if node_scheme == "equispaced":
        return np.linspace(a, b, n)
    if node_scheme == "chebyshev2":
        if n == 1:
            return np.array([(a + b) / 2])
        return a + (b - a) * (1.0 - np.cos(np.arange(n) * np.pi / (n - 1))) / 2
    raise BriError(f"unknown node scheme {node_scheme!r}")


def _check_grid(grid):
    if grid < 100:
        raise BriError(f"test grid needs >= 100 points, got {grid}")


def sin_experiment(n, d, interval=SIN_INTERVAL, grid=SIN_GRID, node_scheme="equispaced", func=np.sin):
    """FH interpolant of func through n nodes, scored on a uniform grid"""
    if not 0 <= d <= n - 1:
        raise DegreeError(f"d={d} outside [0, n-1={n - 1}]")
    _check_grid(grid)
    nodes = sample_nodes(n, interval, node_scheme)
    interp = FhInterpolant.build(nodes, func(nodes), d)
    xs = np.linspace(interval[0], interval[1], grid)
    estimate = fh_eval_many(interp, xs)
    truth = func(xs)
    return ErrorReport(n=n, d=d, mse=mse(estimate, truth),
                       max_abs=float(np.max(np.abs(estimate - truth))),
                       node_scheme=node_scheme, interval=tuple(interval), grid=grid)


def berrut_report(n, interval=SIN_INTERVAL, grid=SIN_GRID, node_scheme="equispaced", func=np.sin):
    """d = 0 row computed with the standalone Berrut evaluator"""
    _check_grid(grid)
    nodes = sample_nodes(n, interval, node_scheme)
    values = func(nodes)
    xs = np.linspace(interval[0], interval[1], grid)
    estimate = np.array([berrut_eval(nodes, values, x) for x in xs])
    truth = func(xs)
    return ErrorReport(n=n, d=0, mse=mse(estimate, truth),
                       max_abs=float(np.max(np.abs(estimate - truth))),
                       node_scheme=node_scheme, interval=tuple(interval), grid=grid)


def mse_table(ns, ds, interval=SIN_INTERVAL, grid=SIN_GRID, node_scheme="equispaced"):
    reports = []
    for n in ns:
        for d in ds:
            reports.append(sin_experiment(n, d, interval, grid, node_scheme))
    logger.info(f"Computed {len(reports)} MSE cells")
    return reports


def write_mse_table(reports, path):
    df = pd.DataFrame([{k: v for k, v in asdict(r).items() if k in ("n", "d", "mse", "max_abs", "node_scheme")}
                       for r in reports], columns=["n", "d", "mse", "max_abs", "node_scheme"])
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", float_format="%.12g")
    return path


def format_mse_table(reports):
    """One row per d, one column per n"""
    df = pd.DataFrame([{"n": r.n, "d": r.d, "mse": r.mse} for r in reports])
    pivot = df.pivot(index="d", columns="n", values="mse")
    return pivot.to_string(float_format=lambda v: f"{v:.6e}")


def error_series(n=8, ds=None, interval=(-1.0, 1.0), grid=SIN_GRID, node_scheme="equispaced", func=np.sin):
    """Max error for n intervals (n+1 nodes) across blending degrees 0..n"""
    ds = range(n + 1) if ds is None else ds
    series = []
    for d in ds:
        report = sin_experiment(n + 1, d, interval, grid, node_scheme, func)
        series.append(replace(report, n=n))
    return series


def convergence_slope(d, ns=(20, 40, 80, 160), interval=SIN_INTERVAL, grid=SIN_GRID, func=np.sin):
    """Least-squares slope of log(max error) against log(node count)"""
    errors = [sin_experiment(n, d, interval, grid, "equispaced", func).max_abs for n in ns]
    slope, _ = np.polyfit(np.log(ns), np.log(errors), 1)
    return float(slope)


def complexity_counts(m, d, s, t, N, k):
    """Closed-form multiply and symbol counts with unit constants.

    encode per worker (m-d+1)(d+1)st, decode at the master (k-d+1)(d+1)st,
    st symbols to each worker, k t^2 symbols back from k workers.
    """
    if min(s, t, N, k) < 1 or m < 0 or d < 0:
        raise BriError("counts need positive sizes")
    if d > m or d > k:
        raise DegreeError(f"d={d} must not exceed m={m} or k={k}")
    encode = (m - d + 1) * (d + 1) * s * t
    return ComplexityCounts(
        encode_per_worker=encode,
        encode_total=N * encode,
        decode_master=(k - d + 1) * (d + 1) * s * t,
        master_to_worker=s * t,
        worker_to_master=k * t * t,
    )


def measured_eval_multiplies(m, d, s, t, seed=0):
    """Block multiplies spent by one blended-form evaluation off the nodes"""
    rng = np.random.default_rng(seed)
    nodes = np.linspace(-1.0, 1.0, m + 1)
    interp = FhInterpolant.build(nodes, rng.standard_normal((m + 1, s, t)), d)
    x = (nodes[0] + nodes[1]) / 2 if m > 0 else 0.5
    counter = OpCounter()
    fh_eval(interp, x, counter)
    return counter.multiplies


def theorem1_check(d, n_points, interval=SIN_INTERVAL, grid=SIN_GRID):
    """(empirical max error, bound) for sin on equispaced nodes; sin norms are 1"""
    a, b = interval
    report = sin_experiment(n_points, d, interval, grid)
    spacing = (b - a) / (n_points - 1)
    bound = theorem1_bound(d, n_points, a, b, spacing, 1.0, 1.0)
    return report.max_abs, bound

