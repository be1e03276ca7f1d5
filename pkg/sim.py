"""
Virtual-time master/worker simulator

Each trial draws a straggler set and per-worker completion times, then
replays the master's wait for every scheme: fixed-threshold schemes wait
for their threshold-th arrival, BRI/BACC decode from whatever the k-policy
collects. All randomness comes from PCG64 streams keyed on (seed, trial),
so runs with the same scenario are reproducible record for record and
scenarios that differ only in S share their random numbers.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import pandas as pd

from analysis import relative_frobenius_error
from codec import (
    CodecConfig,
    Scheme,
    WorkerResult,
    bacc_decode,
    decode,
    decode_share_bytes,
    encode,
    encode_share_bytes,
    make_nodes,
    resolve_thresholds,
)
from config import (
    DEFAULT_BLOCK_SHAPE,
    DEFAULT_DEGREE,
    DEFAULT_EXTRA_DIST,
    DEFAULT_EXTRA_PARAMS,
    DEFAULT_FLOP_SECONDS,
    DEFAULT_JITTER,
    DEFAULT_NODE_SCHEME,
    DEFAULT_OVERHEAD,
    DEFAULT_PARTS,
    DEFAULT_SEED,
    DEFAULT_STRAGGLERS,
    DEFAULT_TRIALS,
    DEFAULT_WORKERS,
)
from errors import BriError, ConfigError
from tasks import TaskKind, TaskSpec, apply_task, run_workers

logger = logging.getLogger(__name__)

DATA_STREAM = 0
TRIAL_STREAM = 1


class ExtraDist(str, Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    NEVER = "never"


_EXTRA_ARITY = {ExtraDist.FIXED: 1, ExtraDist.UNIFORM: 2, ExtraDist.EXPONENTIAL: 1, ExtraDist.NEVER: 0}


class KPolicyKind(str, Enum):
    FIRST_K = "first_k"
    DEADLINE = "deadline"
    ALL_NONSTRAGGLERS = "all_nonstragglers"


@dataclass(frozen=True)
class DelayModel:
    """Worker completion times in seconds.

    worker time = base * (overhead + 1 + jitter * u) [+ base * extra if straggling]
    with u ~ U(0, 1) per worker. extra_params are multiples of base:
    fixed (c,), uniform (a, b), exponential (rate,); never means the
    straggler does not return at all.
    """

    base: float
    straggler_count: int = DEFAULT_STRAGGLERS
    extra_dist: str = DEFAULT_EXTRA_DIST
    extra_params: tuple = DEFAULT_EXTRA_PARAMS
    jitter: float = DEFAULT_JITTER
    overhead: float = DEFAULT_OVERHEAD

    def __post_init__(self):
        dist = ExtraDist(self.extra_dist)
        if self.base < 0 or self.jitter < 0 or self.overhead < 0:
            raise BriError("delays must be non-negative")
        if self.straggler_count < 0:
            raise BriError(f"straggler count must be >= 0, got {self.straggler_count}")
        params = tuple(float(p) for p in self.extra_params)
        if len(params) < _EXTRA_ARITY[dist]:
            raise BriError(f"{dist.value} extra delay needs {_EXTRA_ARITY[dist]} parameters")
        if any(p < 0 for p in params):
            raise BriError("extra delay parameters must be non-negative")
        if dist == ExtraDist.UNIFORM and params[0] > params[1]:
            raise BriError(f"uniform extra delay needs a <= b, got {params}")
        if dist == ExtraDist.EXPONENTIAL and params[0] <= 0:
            raise BriError("exponential extra delay needs a positive rate")
        object.__setattr__(self, "extra_params", params)

    @classmethod
    def for_block(cls, rows, cols, straggler_count, flop_seconds=DEFAULT_FLOP_SECONDS, **kwargs):
        """Flop-proportional base: c * s * t^2 for a gram task on an s x t block"""
        return cls(base=flop_seconds * rows * cols ** 2, straggler_count=straggler_count, **kwargs)

    def _extras(self, rng, n):
        dist = ExtraDist(self.extra_dist)
        p = self.extra_params
        if dist == ExtraDist.FIXED:
            return np.full(n, p[0])
        if dist == ExtraDist.UNIFORM:
            return rng.uniform(p[0], p[1], size=n)
        if dist == ExtraDist.EXPONENTIAL:
            return rng.exponential(1.0 / p[0], size=n)
        return np.full(n, np.inf)

    def sample(self, rng, n_workers, work_scale=1.0):
        """Returns (completion times per worker id, straggler ids).

        The first S entries of one permutation are the stragglers, and
        every worker gets a jitter and an extra draw, so growing S only
        turns more workers into stragglers.
        """
        if self.straggler_count > n_workers:
            raise BriError(f"S={self.straggler_count} exceeds N={n_workers}")
        perm = rng.permutation(n_workers)
        u = rng.uniform(0.0, 1.0, size=n_workers)
        extras = self._extras(rng, n_workers)
        times = self.base * (self.overhead + work_scale * (1.0 + self.jitter * u))
        stragglers = np.sort(perm[:self.straggler_count])
        times[stragglers] += self.base * extras[stragglers]
        return times, stragglers


@dataclass(frozen=True)
class KPolicy:
    kind: str = KPolicyKind.FIRST_K.value
    value: float = None

    def __post_init__(self):
        kind = KPolicyKind(self.kind)
        if kind == KPolicyKind.FIRST_K and self.value is not None and self.value < 1:
            raise BriError(f"first_k needs k >= 1, got {self.value}")
        if kind == KPolicyKind.DEADLINE and (self.value is None or self.value <= 0):
            raise BriError("deadline policy needs a positive deadline")


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    trial: int
    waiting_time: float
    decode_error: float = math.nan
    k_used: int = 1
    failed: bool = False


@dataclass(frozen=True)
class SimScenario:
    N: int = DEFAULT_WORKERS
    m: int = DEFAULT_PARTS - 1
    delay: DelayModel = None
    schemes: tuple = ("BRI", "BACC", "LCC", "MatDot", "EP")
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    d: int = DEFAULT_DEGREE
    block_shape: tuple = DEFAULT_BLOCK_SHAPE
    task: TaskSpec = field(default_factory=TaskSpec)
    thresholds: dict = field(default_factory=dict)
    k_policy: KPolicy = field(default_factory=KPolicy)
    node_scheme: str = DEFAULT_NODE_SCHEME
    name: str = ""

    def __post_init__(self):
        if self.delay is None:
            rows, cols = self.block_shape
            object.__setattr__(self, "delay", DelayModel.for_block(rows, cols, DEFAULT_STRAGGLERS))
        if self.trials < 1:
            raise BriError(f"trials must be >= 1, got {self.trials}")
        if self.N < 1 or self.m < 0:
            raise BriError(f"need N >= 1 and m >= 0, got N={self.N}, m={self.m}")
        if self.S > self.N:
            raise BriError(f"S={self.S} exceeds N={self.N}")
        for name in self.schemes:
            Scheme(name)
        if self.S >= self.N - 2:
            logger.warning(f"S={self.S} >= N-2={self.N - 2}: outside the error-bound hypothesis")

    @property
    def S(self):
        return self.delay.straggler_count

    @classmethod
    def from_dict(cls, raw, name=""):
        return _scenario_from_dict(raw, name)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError("<root>", f"invalid JSON at line {e.lineno}: {e.msg}")
        return _scenario_from_dict(raw, name=str(path))


_TOP_KEYS = {"name", "N", "m", "S", "schemes", "trials", "seed", "d", "block_rows", "block_cols",
             "task", "thresholds", "delay", "k_policy", "node_scheme"}
_DELAY_KEYS = {"base", "flop_seconds", "jitter", "overhead", "extra_dist", "extra_params"}
_POLICY_KEYS = {"kind", "value"}
_TASK_KEYS = {"kind", "coeffs"}


def _typed(raw, key, kinds, path, default=None):
    if key not in raw:
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, kinds):
        names = "/".join(k.__name__ for k in kinds) if isinstance(kinds, tuple) else kinds.__name__
        raise ConfigError(path + key, f"expected {names}, got {type(value).__name__}")
    return value


def _check_keys(raw, allowed, path):
    if not isinstance(raw, dict):
        raise ConfigError(path.rstrip(".") or "<root>", "expected an object")
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(path + unknown[0], "unknown key")


def _scenario_from_dict(raw, name=""):
    _check_keys(raw, _TOP_KEYS, "")
    N = _typed(raw, "N", int, "", DEFAULT_WORKERS)
    m = _typed(raw, "m", int, "", DEFAULT_PARTS - 1)
    S = _typed(raw, "S", int, "", DEFAULT_STRAGGLERS)
    rows = _typed(raw, "block_rows", int, "", DEFAULT_BLOCK_SHAPE[0])
    cols = _typed(raw, "block_cols", int, "", DEFAULT_BLOCK_SHAPE[1])

    delay_raw = _typed(raw, "delay", dict, "", {})
    _check_keys(delay_raw, _DELAY_KEYS, "delay.")
    flop = _typed(delay_raw, "flop_seconds", (int, float), "delay.", DEFAULT_FLOP_SECONDS)
    base = _typed(delay_raw, "base", (int, float), "delay.", flop * rows * cols ** 2)
    params = _typed(delay_raw, "extra_params", list, "delay.", list(DEFAULT_EXTRA_PARAMS))

    task_raw = _typed(raw, "task", (str, dict), "", TaskKind.GRAM.value)
    if isinstance(task_raw, str):
        task_raw = {"kind": task_raw}
    _check_keys(task_raw, _TASK_KEYS, "task.")

    policy_raw = _typed(raw, "k_policy", dict, "", {})
    _check_keys(policy_raw, _POLICY_KEYS, "k_policy.")

    thresholds = _typed(raw, "thresholds", dict, "", {})
    for key, value in thresholds.items():
        if key not in Scheme._value2member_map_:
            raise ConfigError(f"thresholds.{key}", "unknown scheme")
        _typed(thresholds, key, int, "thresholds.")

    schemes = _typed(raw, "schemes", list, "", ["BRI", "BACC", "LCC", "MatDot", "EP"])
    for i, scheme in enumerate(schemes):
        if scheme not in Scheme._value2member_map_:
            raise ConfigError(f"schemes[{i}]", f"unknown scheme {scheme!r}")

    try:
        delay = DelayModel(
            base=float(base),
            straggler_count=S,
            extra_dist=_typed(delay_raw, "extra_dist", str, "delay.", DEFAULT_EXTRA_DIST),
            extra_params=tuple(params),
            jitter=float(_typed(delay_raw, "jitter", (int, float), "delay.", DEFAULT_JITTER)),
            overhead=float(_typed(delay_raw, "overhead", (int, float), "delay.", DEFAULT_OVERHEAD)),
        )
        task = TaskSpec(kind=_typed(task_raw, "kind", str, "task.", TaskKind.GRAM.value),
                        coeffs=tuple(_typed(task_raw, "coeffs", list, "task.", [])))
        policy = KPolicy(kind=_typed(policy_raw, "kind", str, "k_policy.", KPolicyKind.FIRST_K.value),
                         value=_typed(policy_raw, "value", (int, float), "k_policy."))
        return SimScenario(
            N=N, m=m, delay=delay,
            schemes=tuple(schemes),
            trials=_typed(raw, "trials", int, "", DEFAULT_TRIALS),
            seed=_typed(raw, "seed", int, "", DEFAULT_SEED),
            d=_typed(raw, "d", int, "", DEFAULT_DEGREE),
            block_shape=(rows, cols),
            task=task,
            thresholds=dict(thresholds),
            k_policy=policy,
            node_scheme=_typed(raw, "node_scheme", str, "", DEFAULT_NODE_SCHEME),
            name=_typed(raw, "name", str, "", name),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("<root>", str(e))


def trial_rng(seed, trial_index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(TRIAL_STREAM, trial_index))))


def collect_flexible(times, stragglers, policy, n_stragglers):
    """Worker ids the master decodes from and the time it stops waiting.

    Returns (None, inf) when no worker ever returns.
    """
    order = np.argsort(times, kind="stable")
    finite = order[np.isfinite(times[order])]
    if finite.size == 0:
        return None, math.inf
    kind = KPolicyKind(policy.kind)

    if kind == KPolicyKind.FIRST_K:
        k = int(policy.value) if policy.value is not None else times.size - n_stragglers
        k = max(1, min(k, finite.size))
        chosen = finite[:k]
        return chosen, float(times[chosen[-1]])

    if kind == KPolicyKind.DEADLINE:
        chosen = finite[times[finite] <= policy.value]
        if chosen.size == 0:
            chosen = finite[:1]
            return chosen, float(times[chosen[0]])
        if chosen.size == times.size:
            return chosen, float(times[chosen[-1]])
        return chosen, float(policy.value)

    chosen = finite[~np.isin(finite, stragglers)]
    if chosen.size == 0:
        chosen = finite[:1]
    return chosen, float(times[chosen[-1]])


class Simulator:
    """Runs a SimScenario; shares and worker outputs are computed once"""

    def __init__(self, scenario):
        self.logger = logging.getLogger(__name__)
        self.scenario = scenario
        self.thresholds = resolve_thresholds(
            scenario.schemes, scenario.m, scenario.task.degree, scenario.N, scenario.thresholds)
        self.codec_config = CodecConfig(
            m=scenario.m, N=scenario.N,
            d_encode=min(scenario.d, scenario.m), d_decode=scenario.d,
            node_scheme=scenario.node_scheme)
        self.nodes = make_nodes(self.codec_config)

        data = np.random.Generator(np.random.PCG64(np.random.SeedSequence(scenario.seed, spawn_key=(DATA_STREAM,))))
        rows, cols = scenario.block_shape
        self.blocks = [data.standard_normal((rows, cols)) for _ in range(scenario.m + 1)]
        self.aux = data.standard_normal(cols) if scenario.task.kind == TaskKind.MATVEC.value else None
        self.truth = [apply_task(scenario.task, X, self.aux) for X in self.blocks]

        self.shares = encode(self.blocks, self.nodes, self.codec_config.d_encode)
        self.results = run_workers(self.shares, scenario.task, self.aux)
        self.logger.info(f"Prepared {scenario.name or 'scenario'}: N={scenario.N}, m={scenario.m}, "
                         f"S={scenario.S}, schemes={list(scenario.schemes)}")

    def _flexible_record(self, scheme, trial_index, times, stragglers, results):
        chosen, waiting = collect_flexible(times, stragglers, self.scenario.k_policy, self.scenario.S)
        if chosen is None:
            return TrialRecord(scheme, trial_index, math.inf, math.nan, 1, failed=True)
        picked = [replace(results[i], arrival_time=float(times[i])) for i in chosen]
        if scheme == Scheme.BACC.value:
            decoded = bacc_decode(picked, self.nodes)
        else:
            decoded = decode(picked, self.nodes, self.codec_config.d_decode)
        error = relative_frobenius_error(decoded, self.truth)
        return TrialRecord(scheme, trial_index, waiting, error, len(picked))

    def _threshold_record(self, scheme, trial_index, sorted_times):
        k = self.thresholds[scheme].minimum
        if k > sorted_times.size or not math.isfinite(sorted_times[k - 1]):
            return TrialRecord(scheme, trial_index, math.inf, math.nan, k, failed=True)
        return TrialRecord(scheme, trial_index, float(sorted_times[k - 1]), math.nan, k)

    def _records(self, trial_index, times, stragglers, results):
        sorted_times = np.sort(times)
        records = []
        for scheme in self.scenario.schemes:
            if self.thresholds[scheme].flexible:
                records.append(self._flexible_record(scheme, trial_index, times, stragglers, results))
            else:
                records.append(self._threshold_record(scheme, trial_index, sorted_times))
        return records

    def run_trial(self, trial_index):
        rng = trial_rng(self.scenario.seed, trial_index)
        times, stragglers = self.scenario.delay.sample(rng, self.scenario.N)
        self.logger.debug(f"Trial {trial_index}: stragglers {stragglers.tolist()}")
        return self._records(trial_index, times, stragglers, self.results)

    def run(self):
        self.logger.info(f"Running {self.scenario.trials} trials")
        records = []
        for trial_index in range(self.scenario.trials):
            records.extend(self.run_trial(trial_index))
        failed = sum(r.failed for r in records)
        if failed:
            self.logger.warning(f"{failed} scheme trials could not reach their threshold")
        return records

    def run_wallclock_trial(self, trial_index, time_scale=1.0):
        """Same trial with real threads sleeping out the sampled delays.

        Shares travel in the wire format; arrival times are measured on the
        master's clock and fed to the same bookkeeping as the virtual run.
        Workers that never return are not dispatched.
        """
        rng = trial_rng(self.scenario.seed, trial_index)
        times, stragglers = self.scenario.delay.sample(rng, self.scenario.N)
        payloads = [encode_share_bytes(s.worker_id, s.z, s.block) for s in self.shares]

        measured = np.full(self.scenario.N, np.inf)
        results = list(self.results)
        pool = ThreadPoolExecutor(max_workers=self.scenario.N)
        try:
            start = time.perf_counter()
            futures = [pool.submit(_wallclock_worker, payloads[i], times[i] * time_scale,
                                   self.scenario.task, self.aux)
                       for i in range(self.scenario.N) if math.isfinite(times[i])]
            for future in as_completed(futures):
                worker_id, z, block = decode_share_bytes(future.result())
                measured[worker_id] = time.perf_counter() - start
                results[worker_id] = WorkerResult(worker_id, z, _restore_shape(block, self.results[worker_id].block))
        finally:
            pool.shutdown(wait=False, cancel_futures=True)
        self.logger.debug(f"Wall-clock trial {trial_index} finished")
        return self._records(trial_index, measured, stragglers, results)


def _restore_shape(block, reference):
    return block.reshape(np.shape(reference))


def _wallclock_worker(payload, delay_s, task, aux):
    worker_id, z, block = decode_share_bytes(payload)
    time.sleep(max(0.0, delay_s))
    return encode_share_bytes(worker_id, z, apply_task(task, block, aux))


def _scheme_times(records, scheme):
    times = np.array([r.waiting_time for r in records if r.scheme == scheme], dtype=float)
    if times.size == 0:
        raise BriError(f"no records for scheme {scheme}")
    return times


def waiting_time_cdf(records, scheme):
    """Right-continuous empirical CDF as (time, probability) steps.

    Failed trials never complete: they count in the denominator only.
    """
    times = _scheme_times(records, scheme)
    finite = np.sort(times[np.isfinite(times)])
    steps, counts = np.unique(finite, return_counts=True)
    probs = np.cumsum(counts) / times.size
    return [(float(t), float(p)) for t, p in zip(steps, probs)]


def cdf_at(cdf, t):
    prob = 0.0
    for time_s, p in cdf:
        if time_s <= t:
            prob = p
        else:
            break
    return prob


def quantile_time(records, scheme, quantile):
    """Smallest waiting time whose empirical CDF reaches the quantile"""
    if not 0.0 < quantile <= 1.0:
        raise BriError(f"quantile must lie in (0, 1], got {quantile}")
    times = np.sort(_scheme_times(records, scheme))
    idx = max(0, math.ceil(quantile * times.size) - 1)
    return float(times[idx])


def relative_improvement(records, scheme_a, scheme_b, quantile):
    """(t_b - t_a) / t_b at the given CDF level"""
    t_a = quantile_time(records, scheme_a, quantile)
    t_b = quantile_time(records, scheme_b, quantile)
    if t_b == 0.0:
        raise BriError(f"{scheme_b} waiting time is zero at quantile {quantile}")
    if math.isinf(t_b):
        return 0.0 if math.isinf(t_a) else 1.0
    return (t_b - t_a) / t_b


def improvement_table(records, reference=Scheme.BRI.value, quantiles=(0.8, 1.0)):
    schemes = list(dict.fromkeys(r.scheme for r in records))
    rows = []
    for scheme in schemes:
        if scheme == reference:
            continue
        for q in quantiles:
            rows.append({"scheme": scheme, "quantile": q,
                         "improvement": relative_improvement(records, reference, scheme, q)})
    return rows


def write_trials_csv(records, path):
    df = pd.DataFrame([{
        "scheme": r.scheme,
        "trial": r.trial,
        "waiting_time_s": r.waiting_time,
        "k_used": r.k_used,
        "decode_error": r.decode_error,
    } for r in records], columns=["scheme", "trial", "waiting_time_s", "k_used", "decode_error"])
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", float_format="%.12g")
    return path


def write_cdf_csv(records, path):
    rows = []
    for scheme in dict.fromkeys(r.scheme for r in records):
        for t, p in waiting_time_cdf(records, scheme):
            rows.append({"scheme": scheme, "time_s": t, "cdf": p})
    df = pd.DataFrame(rows, columns=["scheme", "time_s", "cdf"])
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", float_format="%.12g")
    return path
