"""
BRI gradient-coded linear regression

The master splits A into m+1 row blocks, encodes them once onto the
worker nodes and keeps A^T y. Every iteration each worker returns
A~_i^T A~_i w, the master interpolates whatever arrived, reads the
interpolant off at the source nodes and sums to get A^T A w.
"""

import logging
import math
import re
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from codec import CodecConfig, Scheme, WorkerResult, decode, encode, make_nodes, resolve_thresholds
from config import (
    DEFAULT_DEGREE,
    DEFAULT_LR_ITERATIONS,
    DEFAULT_NODE_SCHEME,
    DEFAULT_PARTS,
    DEFAULT_SEED,
    DEFAULT_STRAGGLERS,
    DEFAULT_WORKERS,
    POWER_ITERATION_STEPS,
    SYNTHETIC_NOISE,
    SYNTHETIC_PERTURBATION,
)
from errors import BriError, DatasetError, DegreeError, InsufficientResultsError, ShapeMismatchError, UnsupportedRegimeError
from interp_core import FhInterpolant, fh_eval_many
from sim import DelayModel, KPolicy, collect_flexible, trial_rng
from tasks import TaskKind, TaskSpec, apply_task, partition_rows

logger = logging.getLogger(__name__)

MATVEC = TaskSpec(kind=TaskKind.MATVEC.value)
GRADIENT_MODES = ("coded", "oracle")
TRAINING_LOG_COLUMNS = ["iteration", "loss", "grad_error_rel", "k_used", "wall_or_virtual_time_s"]


@dataclass(frozen=True)
class LrConfig:
    """Training setup; d is the decoding degree, encoding uses min(d, parts-1)"""

    parts: int = DEFAULT_PARTS
    d: int = DEFAULT_DEGREE
    learning_rate: float = None
    iterations: int = DEFAULT_LR_ITERATIONS
    N: int = DEFAULT_WORKERS
    S: int = DEFAULT_STRAGGLERS
    delay: DelayModel = None
    seed: int = DEFAULT_SEED
    gradient_mode: str = "coded"
    coded_aty: bool = False
    node_scheme: str = DEFAULT_NODE_SCHEME

    def __post_init__(self):
        if self.parts < 1:
            raise BriError(f"parts must be >= 1, got {self.parts}")
        if self.d < 0:
            raise DegreeError(f"d must be >= 0, got {self.d}")
        if self.learning_rate is not None and self.learning_rate < 0:
            raise BriError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.iterations < 1:
            raise BriError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.S <= self.N:
            raise BriError(f"need 0 <= S <= N, got S={self.S}, N={self.N}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise BriError(f"gradient_mode must be one of {GRADIENT_MODES}")

    @property
    def m(self):
        return self.parts - 1

    @property
    def d_encode(self):
        return min(self.d, self.m)


@dataclass(frozen=True)
class LrState:
    w: np.ndarray
    iteration: int = 0
    loss_history: tuple = ()
    aty: np.ndarray = None
    eta: float = 0.0
    grad_errors: tuple = ()


def _as_problem(A, y):
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if A.ndim != 2:
        raise ShapeMismatchError(f"A must be a matrix, got shape {A.shape}")
    if y.size != A.shape[0]:
        raise ShapeMismatchError(f"y has {y.size} entries, A has {A.shape[0]} rows")
    return A, y


def loss(A, y, w):
    r = A @ w - y
    return 0.5 * float(r @ r)


def power_iteration_lmax(A, steps=POWER_ITERATION_STEPS, seed=0):
    """Largest eigenvalue of A^T A"""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(steps):
        v = A.T @ (A @ v)
        lam = float(np.linalg.norm(v))
        if lam == 0.0:
            return 0.0
        v /= lam
    return lam


def _coded_aty(A, y, shares, nodes, config):
    y_blocks = partition_rows(y.reshape(-1, 1), config.parts)
    y_shares = encode(y_blocks, nodes, config.d_encode)
    results = [WorkerResult(s.worker_id, s.z, s.block.T @ ys.block)
               for s, ys in zip(shares, y_shares)]
    decoded = decode(results, nodes, config.d)
    return np.sum(decoded, axis=0).reshape(-1)


def lr_setup(A, y, config):
    """Partition and encode A once; returns (shares, nodes, initial state)"""
    A, y = _as_problem(A, y)
    if A.shape[0] < config.parts:
        raise ShapeMismatchError(f"A has {A.shape[0]} rows for {config.parts} parts")
    nodes = make_nodes(CodecConfig(m=config.m, N=config.N, d_encode=config.d_encode,
                                   d_decode=config.d, node_scheme=config.node_scheme))
    shares = encode(partition_rows(A, config.parts), nodes, config.d_encode)
    aty = _coded_aty(A, y, shares, nodes, config) if config.coded_aty else A.T @ y

    if config.learning_rate is not None:
        eta = float(config.learning_rate)
    else:
        lmax = power_iteration_lmax(A, seed=config.seed)
        if lmax == 0.0:
            raise BriError("A^T A is zero; pass an explicit learning rate")
        eta = 1.0 / lmax
    logger.info(f"Encoded {A.shape[0]}x{A.shape[1]} data into {len(shares)} shares, eta={eta:.4g}")
    return shares, nodes, LrState(w=np.zeros(A.shape[1]), aty=aty, eta=eta)


def lr_iteration(state, shares, nodes, config, straggler_draw, A, y):
    """One gradient step from the results of workers outside straggler_draw"""
    w = state.w
    true_gram_w = A.T @ (A @ w)
    if config.gradient_mode == "oracle":
        gram_w = true_gram_w
    else:
        stragglers = set(int(i) for i in straggler_draw)
        returned = [s for s in shares if s.worker_id not in stragglers]
        if not returned:
            raise InsufficientResultsError(needed=1, got=0, scheme="BRI")
        results = [WorkerResult(s.worker_id, s.z, apply_task(MATVEC, s.block, w)) for s in returned]
        gram_w = np.sum(decode(results, nodes, config.d), axis=0).reshape(-1)

    grad = gram_w - state.aty
    true_grad = true_gram_w - state.aty
    scale = np.linalg.norm(true_grad)
    err = np.linalg.norm(grad - true_grad)
    grad_error = float(err / scale) if scale > 0 else float(err)

    w_new = w - state.eta * grad
    return replace(state, w=w_new, iteration=state.iteration + 1,
                   loss_history=state.loss_history + (loss(A, y, w_new),),
                   grad_errors=state.grad_errors + (grad_error,))


def centralized_gd(A, y, eta, iterations):
    """Plain gradient descent from w = 0; returns (w, loss history)"""
    A, y = _as_problem(A, y)
    aty = A.T @ y
    w = np.zeros(A.shape[1])
    history = []
    for _ in range(iterations):
        grad = A.T @ (A @ w) - aty
        w = w - eta * grad
        history.append(loss(A, y, w))
    return w, tuple(history)


class CodedRegression:
    """BRI training loop driven by per-iteration straggler draws"""

    def __init__(self, A, y, config):
        self.logger = logging.getLogger(__name__)
        self.A, self.y = _as_problem(A, y)
        self.config = config
        self.shares, self.nodes, self.initial = lr_setup(self.A, self.y, config)
        if config.delay is None:
            rows = self.shares[0].block.shape[0]
            self.delay = DelayModel.for_block(rows, self.A.shape[1], config.S)
        else:
            self.delay = replace(config.delay, straggler_count=config.S)
        self.policy = KPolicy()

    def draw(self, iteration, work_scale=1.0):
        rng = trial_rng(self.config.seed, iteration)
        return self.delay.sample(rng, self.config.N, work_scale)

    def train(self, threshold=None, work_scale=1.0):
        """Returns (final state, training log rows).

        threshold=None trains on BRI-decoded gradients. A fixed threshold
        models a scheme that recovers the exact gradient once that many
        workers have reported.
        """
        state = self.initial
        elapsed = 0.0
        log = []
        oracle = replace(self.config, gradient_mode="oracle")
        for it in range(self.config.iterations):
            times, stragglers = self.draw(it, work_scale)
            if threshold is None:
                chosen, waiting = collect_flexible(times, stragglers, self.policy, self.config.S)
                if chosen is None:
                    raise InsufficientResultsError(needed=1, got=0, scheme="BRI")
                draw = set(range(self.config.N)) - set(int(i) for i in chosen)
                state = lr_iteration(state, self.shares, self.nodes, self.config, draw, self.A, self.y)
                k_used = len(chosen)
            else:
                waiting = float(np.sort(times)[threshold - 1]) if threshold <= self.config.N else math.inf
                state = lr_iteration(state, self.shares, self.nodes, oracle, (), self.A, self.y)
                k_used = threshold
            elapsed += waiting
            log.append({
                "iteration": state.iteration,
                "loss": state.loss_history[-1],
                "grad_error_rel": state.grad_errors[-1],
                "k_used": k_used,
                "wall_or_virtual_time_s": elapsed,
            })
            if (it + 1) % 25 == 0:
                self.logger.info(f"Iteration {it + 1}: loss={state.loss_history[-1]:.6g}")
        return state, log

    def train_scheme(self, scheme, threshold):
        """Train under one scheme's waiting rule; threshold comes from resolve_thresholds"""
        if scheme == Scheme.BACC.value:
            raise BriError("BACC training is BRI with d=0; set d instead")
        if threshold.flexible:
            return self.train()
        scale = self.config.parts / self.config.N if scheme == Scheme.UNCODED.value else 1.0
        return self.train(threshold.minimum, scale)


def training_thresholds(schemes, config, overrides=None):
    """Waiting rules for gradient tasks; EP defaults to all N workers"""
    merged = {Scheme.EP.value: config.N}
    merged.update(overrides or {})
    return resolve_thresholds(schemes, config.m, MATVEC.degree, config.N, merged)


def compare_training_times(A, y, config, schemes=("uncoded", "LCC", "EP", "MatDot", "BRI"), thresholds=None):
    """Virtual training time and final loss per scheme over shared straggler draws.

    Fixed-threshold schemes recover the exact gradient, so they follow the
    centralized loss curve. Uncoded workers hold s/N rows instead of
    s/(m+1), which scales their compute but not the straggler extra.
    """
    trainer = CodedRegression(A, y, config)
    resolved = training_thresholds(schemes, config, thresholds)
    rows = []
    for scheme in schemes:
        state, log = trainer.train_scheme(scheme, resolved[scheme])
        rows.append({"scheme": scheme, "total_time_s": log[-1]["wall_or_virtual_time_s"],
                     "final_loss": state.loss_history[-1]})
    return rows


def write_training_log(log, path):
    df = pd.DataFrame(log, columns=TRAINING_LOG_COLUMNS)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", float_format="%.12g")
    return path


def synthetic_regression(rows=4096, cols=16, parts=DEFAULT_PARTS, perturbation=SYNTHETIC_PERTURBATION,
                         noise=SYNTHETIC_NOISE, seed=DEFAULT_SEED):
    """Row blocks share one Gaussian template plus a small per-block perturbation.

    Returns (A, y, w_true).
    """
    if rows < parts:
        raise ShapeMismatchError(f"{rows} rows for {parts} parts")
    rng = np.random.default_rng(seed)
    block_rows = math.ceil(rows / parts)
    template = rng.standard_normal((block_rows, cols))
    blocks = [template + perturbation * rng.standard_normal((block_rows, cols)) for _ in range(parts)]
    A = np.vstack(blocks)[:rows]
    w_true = rng.standard_normal(cols)
    y = A @ w_true + noise * rng.standard_normal(rows)
    return A, y, w_true


def load_dataset_csv(path):
    """Headerless CSV, one sample per row, label in the last column"""
    try:
        df = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(1, "empty dataset")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetError(int(match.group(1)) if match else 0, str(e))

    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        line = int(np.argmax(bad)) + 1
        raise DatasetError(line, "missing or non-numeric value")
    if numeric.shape[1] < 2:
        raise DatasetError(1, "need at least one feature column and a label")
    data = numeric.to_numpy(dtype=float)
    logger.info(f"Loaded dataset {path}: {data.shape[0]} samples, {data.shape[1] - 1} features")
    return data[:, :-1], data[:, -1]


def theorem2_bound(N, S, d, deriv_norm_d1, deriv_norm_d2):
    """sin((S+1) pi / 2N)^(d+1) ||w^(d+2)||, plus ||w^(d+1)||/(d+1) inside when N-S is even"""
    if d < 1:
        raise UnsupportedRegimeError("error bound requires d >= 1")
    if S < 0:
        raise UnsupportedRegimeError(f"S must be >= 0, got {S}")
    if S >= N - 2:
        raise UnsupportedRegimeError(f"error bound requires S < N - 2, got S={S}, N={N}")
    if deriv_norm_d1 < 0 or deriv_norm_d2 < 0:
        raise UnsupportedRegimeError("derivative norms must be non-negative")
    scale = math.sin((S + 1) * math.pi / (2 * N)) ** (d + 1)
    bound = deriv_norm_d2
    if (N - S) % 2 == 0:
        bound += deriv_norm_d1 / (d + 1)
    return scale * bound


def derivative_norms(func_values, xs, orders):
    """Sup norms of finite-difference derivatives of sampled values"""
    norms = {}
    current = np.asarray(func_values, dtype=float)
    for k in range(1, max(orders) + 1):
        current = np.gradient(current, xs, edge_order=2)
        if k in orders:
            norms[k] = float(np.max(np.abs(current)))
    return norms


def theorem2_sweep(N=DEFAULT_WORKERS, S_values=(3, 5, 7), d_values=(1, 2, 3), draws=100, parts=DEFAULT_PARTS,
                   frequency=4.0, grid=2001, seed=DEFAULT_SEED):
    """Empirical decode error against the straggler bound on scalar blocks.

    A_i = cos(frequency * sigma_i), w = 1, so the worker task is a^2 and
    w(x) = u(x)^2 with u the encoding interpolant.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for d in d_values:
        config = CodecConfig(m=parts - 1, N=N, d_encode=min(d, parts - 1), d_decode=d)
        nodes = make_nodes(config)
        blocks = np.cos(frequency * nodes.alphas).reshape(-1, 1, 1)
        truth = blocks[:, 0, 0] ** 2
        shares = encode(list(blocks), nodes, config.d_encode)
        results = [WorkerResult(s.worker_id, s.z, apply_task(MATVEC, s.block, np.ones(1))) for s in shares]

        u = FhInterpolant.build(nodes.alphas, blocks[:, 0, 0], config.d_encode)
        xs = np.linspace(-1.0, 1.0, grid)
        norms = derivative_norms(fh_eval_many(u, xs) ** 2, xs, (d + 1, d + 2))

        for S in S_values:
            bound = theorem2_bound(N, S, d, norms[d + 1], norms[d + 2])
            worst = 0.0
            violations = 0
            for _ in range(draws):
                stragglers = set(rng.choice(N, size=S, replace=False).tolist())
                kept = [r for r in results if r.worker_id not in stragglers]
                decoded = np.array([float(np.asarray(v).ravel()[0]) for v in decode(kept, nodes, d)])
                err = float(np.max(np.abs(decoded - truth)))
                worst = max(worst, err)
                violations += err > bound
            rows.append({"N": N, "S": S, "d": d, "max_error": worst, "bound": bound,
                         "violations": int(violations), "draws": draws})
            logger.info(f"S={S}, d={d}: max error {worst:.3e}, bound {bound:.3e}, violations {violations}")
    return rows
