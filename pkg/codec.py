"""
BRI encoder/decoder with the BACC and LCC baselines

The master encodes m+1 source blocks X_i (placed at alphas) into N shares
X~_i = r(z_i); workers return Y~_i = f(X~_i); the master interpolates the
returned (z, Y~) pairs and reads off f(X_i) at the alphas.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from config import DEFAULT_DEGREE, DEFAULT_NODE_SCHEME, NODE_GAP
from errors import (
    BriError,
    DegreeError,
    InsufficientResultsError,
    NodeCollisionError,
    NodeError,
    ShapeMismatchError,
)
from interp_core import FhInterpolant, berrut_eval, fh_eval_weights_form

logger = logging.getLogger(__name__)


class NodeScheme(str, Enum):
    CHEBYSHEV2 = "chebyshev2"
    EQUISPACED = "equispaced"
    CUSTOM = "custom"


class Scheme(str, Enum):
    BRI = "BRI"
    BACC = "BACC"
    LCC = "LCC"
    MATDOT = "MatDot"
    EP = "EP"
    UNCODED = "uncoded"


FLEXIBLE_SCHEMES = (Scheme.BRI, Scheme.BACC)


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Source nodes (alphas, one per block) and worker nodes (zs, one per worker)"""

    alphas: np.ndarray
    zs: np.ndarray

    @classmethod
    def build(cls, alphas, zs):
        alphas = np.asarray(alphas, dtype=float).ravel()
        zs = np.asarray(zs, dtype=float).ravel()
        if alphas.size == 0 or zs.size == 0:
            raise NodeError("node set needs at least one alpha and one z")
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(zs))):
            raise NodeError("nodes must be finite")
        for name, pts in (("alphas", alphas), ("zs", zs)):
            if np.unique(pts).size != pts.size:
                raise NodeError(f"{name} must be pairwise distinct")
        gap = min_gap(alphas, zs)
        if gap <= NODE_GAP:
            raise NodeCollisionError(
                f"source and worker nodes only {gap:.3e} apart (need > {NODE_GAP})")
        alphas.setflags(write=False)
        zs.setflags(write=False)
        return cls(alphas=alphas, zs=zs)

    @property
    def m(self):
        return self.alphas.size - 1

    @property
    def N(self):
        return self.zs.size


@dataclass(frozen=True)
class CodecConfig:
    m: int
    N: int
    d_encode: int = DEFAULT_DEGREE
    d_decode: int = DEFAULT_DEGREE
    node_scheme: str = DEFAULT_NODE_SCHEME
    alphas: tuple = None
    zs: tuple = None

    def __post_init__(self):
        if self.m < 0:
            raise BriError(f"m must be >= 0, got {self.m}")
        if self.N < 1:
            raise BriError(f"N must be >= 1, got {self.N}")
        if not 0 <= self.d_encode <= self.m:
            raise DegreeError(f"d_encode={self.d_encode} outside [0, m={self.m}]")
        if self.d_decode < 0:
            raise DegreeError(f"d_decode must be >= 0, got {self.d_decode}")
        NodeScheme(self.node_scheme)


@dataclass(frozen=True)
class Share:
    worker_id: int
    z: float
    block: np.ndarray


@dataclass(frozen=True)
class WorkerResult:
    worker_id: int
    z: float
    block: np.ndarray
    arrival_time: float = 0.0


@dataclass(frozen=True)
class Threshold:
    """Recovery threshold; flexible schemes decode from any count >= minimum"""

    minimum: int
    flexible: bool = False


def min_gap(alphas, zs):
    return float(np.min(np.abs(np.subtract.outer(alphas, zs))))


def _worker_nodes(N, scheme):
    if N == 1:
        return np.array([0.0])
    if scheme == NodeScheme.CHEBYSHEV2:
        return -np.cos(np.arange(N) * np.pi / (N - 1))
    return np.linspace(-1.0, 1.0, N)


def _source_nodes(m, m_hat, scheme):
    i = np.arange(m + 1)
    if scheme == NodeScheme.CHEBYSHEV2:
        return -np.cos((2 * i + 1) * np.pi / (2 * m_hat))
    return -1.0 + (2 * i + 1) / m_hat


def make_nodes(config):
    """Worker nodes on [-1, 1] and interleaved source nodes kept apart from them.

    chebyshev2: z_i = -cos(i pi / (N-1)), alpha_i = -cos((2i+1) pi / (2 m_hat))
    equispaced: z uniform on [-1, 1], alpha_i the midpoints of m_hat cells
    m_hat starts at m+1 and moves in quarter steps until every |alpha - z|
    exceeds the gap.
    """
    scheme = NodeScheme(config.node_scheme)
    if scheme == NodeScheme.CUSTOM:
        if config.alphas is None or config.zs is None:
            raise NodeError("custom node scheme needs explicit alphas and zs")
        nodes = NodeSet.build(config.alphas, config.zs)
        if nodes.m != config.m or nodes.N != config.N:
            raise ShapeMismatchError(
                f"custom nodes give m={nodes.m}, N={nodes.N}; config says m={config.m}, N={config.N}")
        return nodes

    zs = _worker_nodes(config.N, scheme)
    for step in range(4 * config.N + 1):
        m_hat = config.m + 1 + step / 4
        alphas = _source_nodes(config.m, m_hat, scheme)
        if min_gap(alphas, zs) > NODE_GAP:
            if step:
                logger.debug(f"Shifted source nodes to m_hat={m_hat} to clear worker nodes")
            return NodeSet.build(alphas, zs)
    raise NodeCollisionError(
        f"no source placement clears the worker nodes for m={config.m}, N={config.N}")


def stack_blocks(blocks):
    """Stack equally shaped blocks (or scalars) along a new leading axis"""
    blocks = list(blocks)
    if not blocks:
        raise ShapeMismatchError("no blocks given")
    shapes = {np.shape(b) for b in blocks}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"blocks differ in shape: {sorted(shapes)}")
    return np.stack([np.asarray(b, dtype=float) for b in blocks])


def encode(blocks, nodes, d):
    """Shares X~_i = r(z_i) of the FH interpolant through (alpha_i, X_i)"""
    stacked = stack_blocks(blocks)
    if stacked.shape[0] != nodes.alphas.size:
        raise ShapeMismatchError(
            f"{stacked.shape[0]} blocks for {nodes.alphas.size} source nodes")
    if d > nodes.m:
        raise DegreeError(f"d={d} exceeds m={nodes.m}")
    interp = FhInterpolant.build(nodes.alphas, stacked, d)
    logger.debug(f"Encoding {stacked.shape[0]} blocks of shape {stacked.shape[1:]} for {nodes.N} workers")
    return [Share(worker_id=i, z=float(z), block=fh_eval_weights_form(interp, z))
            for i, z in enumerate(nodes.zs)]


def _sorted_results(results, nodes):
    results = list(results)
    if not results:
        raise InsufficientResultsError(needed=1, got=0, scheme="BRI")
    zs = np.array([r.z for r in results], dtype=float)
    if np.unique(zs).size != zs.size:
        raise NodeError("duplicate worker node among results")
    known = np.min(np.abs(np.subtract.outer(zs, nodes.zs)), axis=1)
    if np.any(known > 0):
        raise NodeError("result node is not one of the worker nodes")
    shapes = {np.shape(r.block) for r in results}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"results differ in shape: {sorted(shapes)}")
    order = np.argsort(zs, kind="stable")
    return zs[order], stack_blocks([results[i].block for i in order])


def decode(results, nodes, d, targets=None):
    """Any-k decoding: FH interpolation of the returned (z, Y~) pairs.

    The k results are relabelled in ascending z, the blending degree is
    clamped to k-1, and the interpolant is read off at the targets
    (the alphas by default).
    """
    zs, blocks = _sorted_results(results, nodes)
    d_eff = min(int(d), zs.size - 1)
    interp = FhInterpolant.build(zs, blocks, d_eff)
    targets = nodes.alphas if targets is None else targets
    return [fh_eval_weights_form(interp, t) for t in targets]


def bacc_decode(results, nodes, targets=None):
    """Berrut decoding with alternating-sign weights; equals decode(d=0)"""
    zs, blocks = _sorted_results(results, nodes)
    targets = nodes.alphas if targets is None else targets
    return [berrut_eval(zs, blocks, t) for t in targets]


def lcc_encode(blocks, nodes):
    """Lagrange shares: sum_j X_j l_j(z_i) with l_j the Lagrange basis on the alphas"""
    stacked = stack_blocks(blocks)
    if stacked.shape[0] != nodes.alphas.size:
        raise ShapeMismatchError(
            f"{stacked.shape[0]} blocks for {nodes.alphas.size} source nodes")
    poly = BarycentricInterpolator(nodes.alphas, stacked, axis=0)
    encoded = poly(nodes.zs)
    return [Share(worker_id=i, z=float(z), block=encoded[i]) for i, z in enumerate(nodes.zs)]


def lcc_decode(results, nodes, targets=None, f_degree=2):
    """Exact Lagrange decoding from the first f_degree*m+1 results (by arrival)"""
    results = list(results)
    threshold = f_degree * nodes.m + 1
    if len(results) < threshold:
        raise InsufficientResultsError(needed=threshold, got=len(results), scheme="LCC")
    results.sort(key=lambda r: (r.arrival_time, r.worker_id))
    zs, blocks = _sorted_results(results[:threshold], nodes)
    poly = BarycentricInterpolator(zs, blocks, axis=0)
    targets = nodes.alphas if targets is None else np.asarray(targets, dtype=float)
    decoded = poly(np.asarray(targets, dtype=float))
    return [decoded[i] for i in range(len(targets))]


def scheme_threshold(scheme, m, f_degree, n_workers=None):
    """Recovery threshold model per scheme.

    LCC: f_degree*m + 1; EP (X^T X split as in the entangled example): (m+1)^2;
    MatDot with p = m+1 partitions: 2p - 1; uncoded: every worker.
    """
    scheme = Scheme(scheme)
    if scheme in FLEXIBLE_SCHEMES:
        return Threshold(minimum=1, flexible=True)
    if scheme == Scheme.LCC:
        return Threshold(minimum=f_degree * m + 1)
    if scheme == Scheme.EP:
        return Threshold(minimum=(m + 1) ** 2)
    if scheme == Scheme.MATDOT:
        return Threshold(minimum=2 * (m + 1) - 1)
    if n_workers is None:
        raise BriError("uncoded threshold needs the worker count")
    return Threshold(minimum=int(n_workers))


def resolve_thresholds(schemes, m, f_degree, n_workers, overrides=None):
    """Thresholds for each scheme, config overrides first"""
    overrides = overrides or {}
    resolved = {}
    for name in schemes:
        scheme = Scheme(name)
        if scheme.value in overrides:
            resolved[scheme.value] = Threshold(minimum=int(overrides[scheme.value]))
        else:
            resolved[scheme.value] = scheme_threshold(scheme, m, f_degree, n_workers)
        th = resolved[scheme.value]
        if not th.flexible and th.minimum > n_workers:
            logger.warning(f"{scheme.value} threshold {th.minimum} exceeds N={n_workers}; "
                           f"its trials will be recorded as failed")
    return resolved


# Wire format: little-endian header (worker_id, z, rows, cols) + float64 payload
SHARE_HEADER = np.dtype([("worker_id", "<i8"), ("z", "<f8"), ("rows", "<i8"), ("cols", "<i8")])


def encode_share_bytes(worker_id, z, block):
    arr = np.asarray(block, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim > 2:
        raise ShapeMismatchError(f"wire format carries matrices, got shape {arr.shape}")
    header = np.array([(worker_id, z, arr.shape[0], arr.shape[1])], dtype=SHARE_HEADER)
    return header.tobytes() + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def decode_share_bytes(payload):
    """Returns (worker_id, z, block) from encode_share_bytes output"""
    if len(payload) < SHARE_HEADER.itemsize:
        raise ShapeMismatchError("payload shorter than its header")
    header = np.frombuffer(payload, dtype=SHARE_HEADER, count=1)[0]
    rows, cols = int(header["rows"]), int(header["cols"])
    body = np.frombuffer(payload, dtype="<f8", offset=SHARE_HEADER.itemsize)
    if body.size != rows * cols:
        raise ShapeMismatchError(f"payload holds {body.size} values, header says {rows}x{cols}")
    return int(header["worker_id"]), float(header["z"]), body.reshape(rows, cols).astype(float)


def gram_pipeline(blocks, config, returned=None):
    """Encode, square at the workers and decode f(X) = X^T X at the alphas.

    returned selects the worker ids whose results reach the master
    (all workers by default). Returns (decoded, nodes).
    """
    nodes = make_nodes(config)
    shares = encode(blocks, nodes, config.d_encode)
    ids = range(config.N) if returned is None else returned
    results = [WorkerResult(s.worker_id, s.z, np.asarray(s.block).T @ np.asarray(s.block))
               for s in shares if s.worker_id in set(ids)]
    if not math.isfinite(sum(float(np.sum(r.block)) for r in results)):
        raise BriError("non-finite worker results")
    return decode(results, nodes, config.d_decode), nodes
