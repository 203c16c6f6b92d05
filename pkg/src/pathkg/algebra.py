"""Path algebras: exact semirings for checking and a vector algebra for learning.

Values for a whole graph live in one array with a leading node axis:
``(|V|,)`` for scalar algebras and ``(|V|, d)`` for the neural one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .batching import segment_aggregate
from .nn.params import ParameterStore


class PathAlgebra:
    """``(oplus, otimes, zero, one)`` over numpy values.

    ``multiply`` composes a path value with an edge weight, ``add`` is the
    binary oplus, and ``segment_aggregate`` is the n-ary oplus used by
    propagation (rows sharing a segment id are merged).
    """

    name = "abstract"
    is_semiring = True
    dtype: type = np.float64
    width: int | None = None  # None for scalar values

    def zeros(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def one_value(self):
        raise NotImplementedError

    def multiply(self, h, w):
        raise NotImplementedError

    def add(self, a, b):
        raise NotImplementedError

    def segment_aggregate(self, values, segment_ids, num_segments, degrees=None):
        raise NotImplementedError

    def aggregate(self, values, degree: int | None = None):
        """n-ary oplus over a multiset; an empty multiset yields zero."""
        values = np.asarray(values, dtype=self.dtype)
        if self.width is None:
            values = values.reshape(-1)
        else:
            values = values.reshape(-1, self.width)
        deg = None if degree is None else np.array([degree])
        return self.segment_aggregate(values, np.zeros(len(values), np.int64), 1, deg)[0]

    def scale(self, messages, weights):
        """Weight messages by priorities; exact algebras only use priorities to select."""
        return messages

    def reached(self, h) -> np.ndarray:
        """Boolean mask of rows that differ from the zero element."""
        zero = self.zeros(1)[0]
        diff = h != zero
        return diff.any(axis=tuple(range(1, h.ndim))) if h.ndim > 1 else diff

    def equal(self, a, b, tol: float = 0.0) -> bool:
        a, b = np.asarray(a), np.asarray(b)
        if tol == 0.0:
            return bool(np.array_equal(a, b))
        both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
        with np.errstate(invalid="ignore"):
            close = np.abs(a - b) <= tol
        return bool(np.all(both_inf | close))


class MinPlus(PathAlgebra):
    name = "min-plus"
    dtype = np.float64

    def zeros(self, n):
        return np.full(n, np.inf)

    def one_value(self):
        return 0.0

    def multiply(self, h, w):
        return np.asarray(h, dtype=np.float64) + w

    def add(self, a, b):
        return np.minimum(a, b)

    def segment_aggregate(self, values, segment_ids, num_segments, degrees=None):
        return segment_aggregate(np.asarray(values, np.float64), segment_ids, num_segments, "min", fill=np.inf)


class Counting(PathAlgebra):
    name = "counting"
    dtype = np.int64

    def zeros(self, n):
        return np.zeros(n, dtype=np.int64)

    def one_value(self):
        return 1

    def multiply(self, h, w):
        return np.asarray(h, dtype=np.int64) * np.asarray(w, dtype=np.int64)

    def add(self, a, b):
        return a + b

    def segment_aggregate(self, values, segment_ids, num_segments, degrees=None):
        return segment_aggregate(np.asarray(values, np.int64), segment_ids, num_segments, "sum")


class Boolean(PathAlgebra):
    name = "boolean"
    dtype = np.bool_

    def zeros(self, n):
        return np.zeros(n, dtype=bool)

    def one_value(self):
        return True

    def multiply(self, h, w):
        return np.logical_and(h, w)

    def add(self, a, b):
        return np.logical_or(a, b)

    def segment_aggregate(self, values, segment_ids, num_segments, degrees=None):
        return segment_aggregate(np.asarray(values, bool), segment_ids, num_segments, "or", fill=False)


PNA_EPS = 1e-6


def pna_features(values: np.ndarray, segment_ids, num_segments: int, degrees: np.ndarray, delta: float):
    """mean/max/min/std of incoming messages times identity/amplify/attenuate scalers.

    Segments without messages get all-zero features. Returns ``(n, 12 d)``.
    """
    values = np.asarray(values, dtype=np.float64)
    d = values.shape[1]
    count = np.bincount(np.asarray(segment_ids, np.int64), minlength=num_segments).astype(np.float64)
    has = count > 0
    safe = np.where(has, count, 1.0)[:, None]
    total = segment_aggregate(values, segment_ids, num_segments, "sum")
    sq = segment_aggregate(values * values, segment_ids, num_segments, "sum")
    mean = total / safe
    var = np.maximum(sq / safe - mean * mean, 0.0)
    std = np.sqrt(var + PNA_EPS) - np.sqrt(PNA_EPS)
    mx = segment_aggregate(values, segment_ids, num_segments, "max", fill=0.0)
    mn = segment_aggregate(values, segment_ids, num_segments, "min", fill=0.0)
    stats = np.concatenate([mean, mx, mn, std], axis=1) * has[:, None]
    logd = np.log(np.asarray(degrees, np.float64) + 1.0)[:, None]
    amp = logd / delta
    att = np.where(logd > 0, delta / np.where(logd > 0, logd, 1.0), 0.0)
    out = np.concatenate([stats, stats * amp, stats * att], axis=1)
    assert out.shape[1] == 12 * d
    return out


@dataclass
class NeuralAlgebra(PathAlgebra):
    """DistMult messages (elementwise product) with sum or PNA aggregation.

    Not a semiring; PNA needs the per-layer projection ``pna.{t}`` (12d x d)
    and a degree normaliser ``delta`` (mean ``log(deg + 1)`` of the train
    graph). ``layer`` selects the projection used by ``segment_aggregate``.
    """

    width: int = 32
    aggregator: str = "sum"
    store: ParameterStore | None = None
    delta: float = 1.0
    layer: int = 0
    multiply_calls: int = field(default=0, repr=False)

    name = "neural"
    is_semiring = False
    dtype = np.float64

    def __post_init__(self):
        if self.aggregator not in ("sum", "pna"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")

    def zeros(self, n):
        return np.zeros((n, self.width))

    def one_value(self):
        return np.ones(self.width)

    def multiply(self, h, w):
        h, w = np.asarray(h, np.float64), np.asarray(w, np.float64)
        if h.shape[-1] != self.width or w.shape[-1] != self.width:
            raise ValueError(f"expected width {self.width}, got {h.shape} and {w.shape}")
        self.multiply_calls += int(np.prod(np.broadcast_shapes(h.shape, w.shape)[:-1], dtype=np.int64))
        return h * w

    def add(self, a, b):
        return a + b

    def scale(self, messages, weights):
        return messages * np.asarray(weights, np.float64)[:, None]

    def segment_aggregate(self, values, segment_ids, num_segments, degrees=None):
        values = np.asarray(values, np.float64).reshape(-1, self.width)
        if self.aggregator == "sum":
            return segment_aggregate(values, segment_ids, num_segments, "sum")
        if degrees is None:
            degrees = np.bincount(np.asarray(segment_ids, np.int64), minlength=num_segments)
        feats = pna_features(values, segment_ids, num_segments, degrees, self.delta)
        return feats @ self.store[f"pna.{self.layer}"]


def make_algebra(name: str, **kwargs) -> PathAlgebra:
    table = {"min-plus": MinPlus, "minplus": MinPlus, "counting": Counting, "boolean": Boolean}
    if name in table:
        return table[name]()
    if name == "neural":
        return NeuralAlgebra(**kwargs)
    raise ValueError(f"unknown algebra {name!r}")


EDGE_MODES = ("constant", "per-relation-embedding", "linear-over-query")


@dataclass
class EdgeWeightModel:
    """Edge weights ``w_q(x, r, v)``; a function of ``r`` and the query relation only.

    ``constant`` serves exact algebras (``value`` may be a scalar or a
    per-relation array). The neural modes read ``relation.{t}`` (2R x d) or
    ``relation_linear.{t}.weight`` (d x 2R*d, column block ``r`` holds
    ``W_r`` transposed) and ``relation_linear.{t}.bias`` (2R*d) from the
    store, with ``t`` the iteration when ``layerwise`` else 0.
    """

    mode: str = "constant"
    value: float | np.ndarray = 1
    store: ParameterStore | None = None
    num_relations: int = 0
    layerwise: bool = True

    def __post_init__(self):
        if self.mode not in EDGE_MODES:
            raise ValueError(f"unknown edge weight mode {self.mode!r}")

    def _slot(self, step: int) -> int:
        return step if self.layerwise else 0

    def relation_table(self, query_relation: int, step: int = 0) -> np.ndarray:
        """Weights for every relation given the query relation: (2R,) or (2R, d)."""
        if self.mode == "constant":
            v = np.asarray(self.value)
            return np.broadcast_to(v, (self.num_relations,)) if v.ndim == 0 else v
        t = self._slot(step)
        if self.mode == "per-relation-embedding":
            return self.store[f"relation.{t}"]
        q = self.store["query"][query_relation]
        flat = q @ self.store[f"relation_linear.{t}.weight"] + self.store[f"relation_linear.{t}.bias"]
        return flat.reshape(self.num_relations, -1)

    def weights(self, relations, query_relation: int, step: int = 0) -> np.ndarray:
        return self.relation_table(query_relation, step)[np.asarray(relations, np.int64)]


@dataclass
class BoundaryModel:
    """``h0(u, v)``: the query embedding (or the algebra's one) on ``u``, zero elsewhere."""

    algebra: PathAlgebra
    store: ParameterStore | None = None
    one: object = None

    def value(self, query_relation: int):
        if isinstance(self.algebra, NeuralAlgebra):
            return self.store["query"][query_relation]
        return self.algebra.one_value() if self.one is None else self.one

    def boundary(self, u: int, q: int, v: int):
        if u == v:
            return self.value(q)
        return self.algebra.zeros(1)[0]

    def table(self, num_nodes: int, u: int, q: int) -> np.ndarray:
        h = self.algebra.zeros(num_nodes)
        h[u] = self.value(q)
        return h


def multiply(algebra: PathAlgebra, h, w):
    return algebra.multiply(h, w)


def aggregate(algebra: PathAlgebra, values, degree: int | None = None):
    return algebra.aggregate(values, degree)


def boundary(model: BoundaryModel, u: int, q: int, v: int):
    return model.boundary(u, q, v)
