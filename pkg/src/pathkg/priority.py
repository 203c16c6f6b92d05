"""Node priority functions guiding top-K node and top-L edge selection."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph
from .nn.params import ParameterStore

PRIORITY_KINDS = ("neural", "ppr", "degree")


def _transition(graph: KnowledgeGraph) -> sp.csr_matrix:
    """Column-stochastic ``A^T D^-1`` over the (multi)edges; dangling columns are empty."""
    V = graph.num_entities
    deg = graph.degrees.astype(np.float64)
    w = 1.0 / deg[graph.heads] if graph.num_edges else np.zeros(0)
    return sp.csr_matrix((w, (graph.tails, graph.heads)), shape=(V, V))


def ppr_scores(graph: KnowledgeGraph, u: int, damping: float = 0.85, iters: int = 20,
               transition: sp.csr_matrix | None = None, normalize: bool = True) -> np.ndarray:
    """Personalised PageRank from ``u`` by power iteration, max-normalised.

    ``p <- (1 - damping) e_u + damping A^T D^-1 p`` starting at ``e_u``; the
    mass sitting on dangling nodes restarts at ``u`` so each step conserves
    total probability.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    if iters < 1:
        raise ValueError("need at least one iteration")
    P = _transition(graph) if transition is None else transition
    dangling = graph.degrees == 0
    e = np.zeros(graph.num_entities)
    e[u] = 1.0
    p = e.copy()
    for _ in range(iters):
        moved = P @ p
        lost = p[dangling].sum()
        p = (1 - damping) * e + damping * (moved + lost * e)
    if not normalize:
        return p
    return p / p.max()


def degree_scores(graph: KnowledgeGraph) -> np.ndarray:
    deg = graph.degrees.astype(np.float64)
    top = deg.max() if len(deg) else 0.0
    return deg / top if top > 0 else np.zeros_like(deg)


def _sigmoid(x):
    x = np.asarray(x, np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_priority_params(store: ParameterStore, prefix: str, width: int, hidden: int, rng: np.random.Generator):
    """g: [h, q] (2d) -> hidden -> d; f: d -> hidden -> 1."""
    store.init_uniform(f"{prefix}.g.0.weight", (2 * width, hidden), 2 * width, rng)
    store.init_uniform(f"{prefix}.g.0.bias", (hidden,), 2 * width, rng)
    store.init_uniform(f"{prefix}.g.1.weight", (hidden, width), hidden, rng)
    store.init_uniform(f"{prefix}.g.1.bias", (width,), hidden, rng)
    store.init_uniform(f"{prefix}.f.0.weight", (width, hidden), width, rng)
    store.init_uniform(f"{prefix}.f.0.bias", (hidden,), width, rng)
    store.init_uniform(f"{prefix}.f.1.weight", (hidden, 1), hidden, rng)
    store.init_uniform(f"{prefix}.f.1.bias", (1,), hidden, rng)


def neural_priority(h, q, params: ParameterStore, prefix: str = "priority"):
    """Score rows of ``h`` against query embedding(s) ``q``.

    ``s_vec = h * g([h, q])`` and ``score = sigmoid(f(s_vec))``. Returns
    ``(score, s_vec)``; accepts a single row or a stack of rows.
    """
    h = np.atleast_2d(np.asarray(h, np.float64))
    q = np.broadcast_to(np.asarray(q, np.float64), h.shape)
    p = params
    hid = np.maximum(np.concatenate([h, q], axis=1) @ p[f"{prefix}.g.0.weight"] + p[f"{prefix}.g.0.bias"], 0.0)
    gate = hid @ p[f"{prefix}.g.1.weight"] + p[f"{prefix}.g.1.bias"]
    s_vec = h * gate
    z = np.maximum(s_vec @ p[f"{prefix}.f.0.weight"] + p[f"{prefix}.f.0.bias"], 0.0)
    logit = (z @ p[f"{prefix}.f.1.weight"] + p[f"{prefix}.f.1.bias"])[:, 0]
    return _sigmoid(logit), s_vec


class UnitPriority:
    """Every node scores 1 (ties fall back to node id)."""

    def __call__(self, h, step):
        return np.ones(len(h))


class StaticPriority:
    """A fixed score vector reused at every step (PPR, degree, or anything else)."""

    def __init__(self, scores):
        self.scores = np.asarray(scores, np.float64)

    def __call__(self, h, step):
        return self.scores


class NeuralPriority:
    """Neural priority for one query; zero rows get the shared baseline score."""

    def __init__(self, store: ParameterStore, query_relation: int, prefix: str = "priority"):
        self.store = store
        self.q = store["query"][query_relation]
        self.prefix = prefix

    def baseline(self) -> float:
        return float(neural_priority(np.zeros_like(self.q), self.q, self.store, self.prefix)[0][0])

    def __call__(self, h, step):
        h = np.asarray(h, np.float64)
        rows = np.flatnonzero(np.any(h != 0, axis=1))
        out = np.full(len(h), self.baseline())
        if len(rows):
            out[rows] = neural_priority(h[rows], self.q, self.store, self.prefix)[0]
        return out


class PPRCache:
    """Per-source PPR vectors, computed on first use."""

    def __init__(self, graph: KnowledgeGraph, damping: float = 0.85, iters: int = 20):
        self.graph, self.damping, self.iters = graph, damping, iters
        self._P = _transition(graph)
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, u: int) -> np.ndarray:
        s = self._cache.get(u)
        if s is None:
            s = self._cache[u] = ppr_scores(self.graph, u, self.damping, self.iters, self._P)
        return s
