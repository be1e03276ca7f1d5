"""Worker-side computations f applied to coded shares."""

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from codec import WorkerResult
from errors import BriError, ShapeMismatchError

logger = logging.getLogger(__name__)


class TaskKind(str, Enum):
    GRAM = "gram"
    MATVEC = "matvec"
    POLY = "poly"


@dataclass(frozen=True)
class TaskSpec:
    """gram: X^T X, matvec: X^T X w, poly: sum_j c_j X^j (square X)"""

    kind: str = TaskKind.GRAM.value
    coeffs: tuple = ()

    def __post_init__(self):
        kind = TaskKind(self.kind)
        if kind == TaskKind.POLY and self.degree < 1:
            raise BriError("poly task needs a non-zero coefficient of degree >= 1")

    @property
    def degree(self):
        kind = TaskKind(self.kind)
        if kind != TaskKind.POLY:
            return 2
        nonzero = [j for j, c in enumerate(self.coeffs) if c != 0]
        return max(nonzero) if nonzero else 0


def apply_task(spec, block, aux=None):
    X = np.asarray(block, dtype=float)
    if X.ndim != 2:
        raise ShapeMismatchError(f"tasks act on matrices, got shape {X.shape}")
    kind = TaskKind(spec.kind)

    if kind == TaskKind.MATVEC:
        if aux is None:
            raise ShapeMismatchError("matvec task needs the vector w")
        w = np.asarray(aux, dtype=float).reshape(-1)
        if w.size != X.shape[1]:
            raise ShapeMismatchError(f"w has {w.size} entries, block has {X.shape[1]} columns")
        return (X.T @ (X @ w)).reshape(-1, 1)
    if aux is not None:
        raise ShapeMismatchError(f"{kind.value} task takes no vector")

    if kind == TaskKind.GRAM:
        return X.T @ X

    if X.shape[0] != X.shape[1]:
        raise ShapeMismatchError(f"poly task needs a square block, got {X.shape}")
    # Horner
    eye = np.eye(X.shape[0])
    result = spec.coeffs[-1] * eye
    for c in reversed(spec.coeffs[:-1]):
        result = result @ X + c * eye
    return result


def partition_rows(matrix, parts):
    """Split rows into `parts` blocks of ceil(s/parts) rows, zero padding the tail"""
    M = np.asarray(matrix, dtype=float)
    if parts < 1:
        raise BriError(f"parts must be >= 1, got {parts}")
    s = M.shape[0]
    if parts > s:
        warnings.warn(f"{parts} parts for {s} rows; trailing blocks are all zero", UserWarning)
        logger.warning(f"Partitioning {s} rows into {parts} parts leaves zero blocks")
    rows = math.ceil(s / parts)
    padded = np.zeros((rows * parts,) + M.shape[1:])
    padded[:s] = M
    return [padded[i * rows:(i + 1) * rows] for i in range(parts)]


def run_workers(shares, spec, aux=None, arrival_times=None):
    """Apply the task to every share; arrival_times maps worker_id -> time"""
    arrival_times = arrival_times or {}
    return [WorkerResult(worker_id=s.worker_id, z=s.z,
                         block=apply_task(spec, s.block, aux),
                         arrival_time=float(arrival_times.get(s.worker_id, 0.0)))
            for s in shares]
