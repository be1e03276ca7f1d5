"""
Floater-Hormann barycentric rational interpolation

Scalar- and matrix-valued kernel shared by the encoder and the decoder.
Values are stacked along axis 0: shape (n+1,) for scalars, (n+1, s, t)
for blocks. The rational weights are scalars, so a matrix-valued
interpolant is one linear combination of the value blocks per point.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from config import NODE_EPS_REL
from errors import DegreeError, NodeError, ShapeMismatchError, UnsupportedRegimeError

logger = logging.getLogger(__name__)


class OpCounter:
    """Counts scalar multiplies spent on value blocks"""

    def __init__(self):
        self.multiplies = 0

    def add(self, count):
        self.multiplies += int(count)


@dataclass(frozen=True, eq=False)
class FhInterpolant:
    """Ordered nodes, matching values and blending degree d.

    Build through FhInterpolant.build, which sorts the nodes (values are
    co-permuted) and rejects duplicates closer than the near-node guard.
    """

    nodes: np.ndarray
    values: np.ndarray
    d: int

    @classmethod
    def build(cls, nodes, values, d):
        x = np.asarray(nodes, dtype=float).ravel()
        v = np.asarray(values, dtype=float)
        if x.size == 0:
            raise NodeError("interpolant needs at least one node")
        if v.ndim == 0 or v.shape[0] != x.size:
            raise ShapeMismatchError(
                f"{x.size} nodes but values with leading dimension {v.shape[:1]}")
        if not np.all(np.isfinite(x)):
            raise NodeError("nodes must be finite")
        d = int(d)
        if d < 0 or d > x.size - 1:
            raise DegreeError(f"blending degree d={d} outside [0, {x.size - 1}]")

        order = np.argsort(x, kind="stable")
        x = x[order]
        v = v[order]
        if x.size > 1 and np.min(np.diff(x)) < node_eps(x):
            raise NodeError("duplicate nodes")

        x.setflags(write=False)
        v.setflags(write=False)
        return cls(nodes=x, values=v, d=d)

    @property
    def n(self):
        """Highest node index"""
        return self.nodes.size - 1

    @property
    def value_shape(self):
        return self.values.shape[1:]

    @property
    def eps(self):
        return node_eps(self.nodes)

    @cached_property
    def weights(self):
        return fh_weights(self.nodes, self.d)


def node_eps(nodes):
    """Near-node guard: 1e-13 times the node span"""
    if len(nodes) < 2:
        return 0.0
    return NODE_EPS_REL * float(nodes[-1] - nodes[0])


def _check_point(x):
    x = float(x)
    if not math.isfinite(x):
        raise NodeError(f"evaluation point must be finite, got {x}")
    return x


def _node_hit(interp, x):
    """Index of the node within the guard of x, or None"""
    if interp.n == 0:
        return 0
    gaps = np.abs(interp.nodes - x)
    j = int(np.argmin(gaps))
    if gaps[j] < interp.eps:
        return j
    return None


def _value_at(interp, j):
    v = interp.values[j]
    return v.copy() if isinstance(v, np.ndarray) else v


def _combine(coeffs, values):
    out = np.tensordot(coeffs, values, axes=(0, 0))
    return out[()] if out.ndim == 0 else out


def _scaled(diffs):
    """(x - x_j) / h with h a power of two near max |x - x_j|, and log2 h.

    Dividing by a power of two is exact, so every blending weight keeps
    its rounding and only moves by the common factor h^(d+1).
    """
    _, e = np.frexp(np.max(np.abs(diffs), axis=-1))
    return np.ldexp(diffs, -e[..., None] if np.ndim(e) else -e), e


def _blend_sum(nodes, u, e, d):
    """h^(d+1) sum_i lam_i(x), adding neighbouring weights in closed form.

    lam_i + lam_{i+1} = (x_i - x_{i+d+1}) / prod_{j=i}^{i+d+1} (x - x_j)
    for even i, so the alternating terms never cancel outside the nodes.
    """
    count = u.shape[-1] - d
    total = np.zeros(u.shape[:-1])
    for i in range(0, count - 1, 2):
        gap = np.ldexp(nodes[i] - nodes[i + d + 1], -e)
        total = total + gap / np.prod(u[..., i:i + d + 2], axis=-1)
    if count % 2:
        total = total + 1.0 / np.prod(u[..., count - 1:], axis=-1)
    return total[()] if total.ndim == 0 else total


def fh_eval(interp, x, counter=None):
    """Blended form: sum_i lam_i(x) l_i(x) / sum_i lam_i(x).

    lam_i(x) = (-1)^i / prod_{j=i}^{i+d} (x - x_j) is the normalised
    blending weight and l_i the local Lagrange polynomial through nodes
    i..i+d, formed on the value blocks window by window. The blocks enter
    as offsets from the value at the nearest node, which makes constant
    data come back exactly at any x.
    """
    x = _check_point(x)
    hit = _node_hit(interp, x)
    if hit is not None:
        return _value_at(interp, hit)

    nodes, values, d = interp.nodes, interp.values, interp.d
    size = int(np.prod(interp.value_shape, dtype=int))
    diffs = x - nodes
    u, e = _scaled(diffs)
    ref = int(np.argmin(np.abs(diffs)))
    offsets = values - values[ref]

    numer = np.zeros(interp.value_shape)
    for i in range(interp.n - d + 1):
        lam = (-1.0) ** i / np.prod(u[i:i + d + 1])
        piece = np.zeros(interp.value_shape)
        for k in range(i, i + d + 1):
            basis = 1.0
            for j in range(i, i + d + 1):
                if j != k:
                    basis *= diffs[j] / (nodes[k] - nodes[j])
            piece = piece + basis * offsets[k]
            if counter is not None:
                counter.add(size)
        numer = numer + lam * piece
        if counter is not None:
            counter.add(size)

    result = np.asarray(values[ref] + numer / _blend_sum(nodes, u, e, d))
    return result[()] if result.ndim == 0 else result


def fh_weights(nodes, d):
    """Barycentric weights w_k = sum_{i in J_k} (-1)^i prod_{j != k} 1/(x_k - x_j)"""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size - 1
    w = np.zeros(n + 1)
    for k in range(n + 1):
        for i in range(max(0, k - d), min(k, n - d) + 1):
            term = 1.0
            for j in range(i, i + d + 1):
                if j != k:
                    term /= nodes[k] - nodes[j]
            w[k] += (-1.0) ** i * term
    return w


def fh_eval_weights_form(interp, x):
    """Fast path: r(x) = sum_k w_k f_k/(x-x_k) / sum_k w_k/(x-x_k).

    One pass over the value blocks. The denominator is the blended sum,
    which equals sum_k w_k/(x-x_k) but does not cancel away from the nodes.
    """
    x = _check_point(x)
    hit = _node_hit(interp, x)
    if hit is not None:
        return _value_at(interp, hit)
    diffs = x - interp.nodes
    u, e = _scaled(diffs)
    ref = int(np.argmin(np.abs(diffs)))
    c = interp.weights / u / _blend_sum(interp.nodes, u, e, interp.d)
    shift = np.ldexp(np.tensordot(c, interp.values - interp.values[ref], axes=(0, 0)), interp.d * e)
    result = np.asarray(interp.values[ref] + shift)
    return result[()] if result.ndim == 0 else result


def fh_eval_many(interp, xs):
    """Weights-form evaluation on an array of points; node hits are exact"""
    xs = np.asarray(xs, dtype=float).ravel()
    if not np.all(np.isfinite(xs)):
        raise NodeError("evaluation points must be finite")
    out = np.empty((xs.size,) + interp.value_shape)
    if interp.n == 0:
        out[:] = interp.values[0]
        return out

    gaps = np.abs(xs[:, None] - interp.nodes[None, :])
    nearest = np.argmin(gaps, axis=1)
    hits = gaps[np.arange(xs.size), nearest] < interp.eps
    free = np.flatnonzero(~hits)

    if free.size:
        u, e = _scaled(xs[free][:, None] - interp.nodes[None, :])
        c = interp.weights[None, :] / u / _blend_sum(interp.nodes, u, e, interp.d)[:, None]
        tail = (1,) * len(interp.value_shape)
        for ref in np.unique(nearest[free]):
            rows = nearest[free] == ref
            shift = np.tensordot(c[rows], interp.values - interp.values[ref], axes=(1, 0))
            shift = np.ldexp(shift, (interp.d * e[rows]).reshape((-1,) + tail))
            out[free[rows]] = interp.values[ref] + shift
    if np.any(hits):
        out[hits] = interp.values[nearest[hits]]
    return out


def fh_denominator(interp, x, form="berrut"):
    """Denominator of the blended form at x (scalar or array).

    form="berrut": sum_i (-1)^i / prod_{j=i}^{i+d} (x - x_j)
    form="product": sum_i prod_{j<i} (x - x_j) prod_{k>i+d} (x_k - x)
    Both are free of real zeros; they differ by the factor
    (-1)^(n-d) prod_j (x - x_j). The berrut form decays like |x|^-(d+1)
    and is representable up to roughly |x| = 1e300^(1/(d+1)).
    """
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise NodeError("evaluation point must be finite")
    nodes, d, n = interp.nodes, interp.d, interp.n
    diffs = xs[..., None] - nodes
    if interp.n > 0 and np.any(np.min(np.abs(diffs), axis=-1) < interp.eps):
        raise NodeError("x coincides with a node; use the near-node guard")

    if form == "berrut":
        u, e = _scaled(diffs)
        total = np.asarray(np.ldexp(_blend_sum(nodes, u, e, d), -(d + 1) * e))
    elif form == "product":
        total = np.zeros(xs.shape)
        for i in range(n - d + 1):
            left = np.prod(diffs[..., :i], axis=-1)
            right = np.prod(-diffs[..., i + d + 1:], axis=-1)
            total = total + left * right
    else:
        raise ValueError(f"unknown denominator form {form!r}")
    return total[()] if total.ndim == 0 else total


def berrut_eval(nodes, values, x):
    """Berrut's interpolant, weights (-1)^i / (x - x_i) over ascending nodes.

    Written independently of the FH code paths; used as the d = 0 oracle.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(nodes, kind="stable")
    nodes, values = nodes[order], values[order]
    x = _check_point(x)

    diffs = x - nodes
    exact = np.flatnonzero(np.abs(diffs) < node_eps(nodes))
    if nodes.size == 1 or exact.size:
        j = 0 if nodes.size == 1 else int(exact[0])
        v = values[j]
        return v.copy() if isinstance(v, np.ndarray) else v

    # scale by 1/min|x - x_i| so the nearest weight is +-1
    ref = int(np.argmin(np.abs(diffs)))
    t = diffs[ref] / diffs
    signs = np.where(np.arange(nodes.size) % 2 == 0, 1.0, -1.0)
    pairs = t[:-1:2] * t[1::2] * (nodes[:-1:2] - nodes[1::2]) / diffs[ref]
    denom = np.sum(pairs) + (signs[-1] * t[-1] if nodes.size % 2 else 0.0)
    c = signs * t / denom
    return values[ref] + _combine(c, values - values[ref])


def theorem1_bound(d, n_points, a, b, max_spacing, deriv_norm_d1, deriv_norm_d2):
    """Sup-error bound for the FH interpolant, d >= 1.

    With n = n_points - 1 and lam the largest node spacing:
      n - d odd:  lam^(d+1) (b - a) ||f^(d+2)|| / (d + 2)
      n - d even: lam^(d+1) [(b - a) ||f^(d+2)|| / (d + 2) + ||f^(d+1)|| / (d + 1)]
    """
    if d < 1:
        raise UnsupportedRegimeError("error bound requires d >= 1")
    n = n_points - 1
    if n < d:
        raise UnsupportedRegimeError(f"need n_points - 1 >= d, got n={n}, d={d}")
    if max_spacing <= 0:
        raise UnsupportedRegimeError("max_spacing must be positive")
    if deriv_norm_d1 < 0 or deriv_norm_d2 < 0:
        raise UnsupportedRegimeError("derivative norms must be non-negative")

    scale = max_spacing ** (d + 1)
    bound = (b - a) * deriv_norm_d2 / (d + 2)
    if (n - d) % 2 == 0:
        bound += deriv_norm_d1 / (d + 1)
    return scale * bound
