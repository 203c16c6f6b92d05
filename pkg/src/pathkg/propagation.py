"""Single-query Bellman-Ford, priority-pruned propagation and walk enumeration.

These run any :class:`~pathkg.algebra.PathAlgebra` and serve as the
reference engine; the batched trainable model lives in :mod:`pathkg.model`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import BoundaryModel, EdgeWeightModel, PathAlgebra
from .batching import RankedBatch, padding_free_topk
from .kg import KnowledgeGraph


class WalkBudgetExceeded(RuntimeError):
    pass


class PathError(ValueError):
    pass


def _ceil(x: float) -> int:
    # guard against 0.07 * 100 = 7.000000000000001
    return math.ceil(round(x, 9))


@dataclass(frozen=True)
class BudgetConfig:
    node_ratio: float = 1.0
    degree_ratio: float = 1.0
    num_steps: int = 8

    def __post_init__(self):
        for name in ("node_ratio", "degree_ratio"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.num_steps < 0:
            raise ValueError("num_steps must be non-negative")

    def limits(self, num_nodes: int, num_edges: int) -> tuple[int, int]:
        """``K = ceil(alpha |V|)`` and ``L = ceil(beta K |E| / |V|)``, both at least 1."""
        k = max(1, _ceil(self.node_ratio * num_nodes))
        l = max(1, _ceil(self.degree_ratio * k * num_edges / max(num_nodes, 1)))
        return k, l


@dataclass
class Frontier:
    iteration: int
    selected_nodes: np.ndarray
    selected_edges: np.ndarray
    # nodes whose priority was eligible for selection (and recorded) this step
    pool: np.ndarray
    # s^(t-1), dense over nodes
    priority: np.ndarray


@dataclass
class PropagationStats:
    messages_per_step: list[int] = field(default_factory=list)
    nodes_per_step: list[int] = field(default_factory=list)
    wall_time: float = 0.0

    def lines(self) -> list[str]:
        return [f"step={t} nodes={n} edges={m}"
                for t, (n, m) in enumerate(zip(self.nodes_per_step, self.messages_per_step), 1)]

    @property
    def mean_messages(self) -> float:
        return float(np.mean(self.messages_per_step)) if self.messages_per_step else 0.0


@dataclass
class PropagationResult:
    h: np.ndarray
    priority: np.ndarray
    stats: PropagationStats
    frontiers: list[Frontier] = field(default_factory=list)
    # s^(0) .. s^(T)
    priorities: list[np.ndarray] = field(default_factory=list)


def _edge_weights(weight_model: EdgeWeightModel, graph: KnowledgeGraph, q: int, step: int) -> np.ndarray:
    return weight_model.weights(graph.relations, q, step)


def bellman_ford_full(
    graph: KnowledgeGraph,
    query: tuple[int, int],
    num_steps: int,
    algebra: PathAlgebra,
    weight_model: EdgeWeightModel,
    boundary_model: BoundaryModel | None = None,
    mask: np.ndarray | None = None,
) -> PropagationResult:
    """``h^t(v) = h^0(v) (+) sum over visible edges (x, r, v) of h^{t-1}(x) (x) w``."""
    u, q = query
    boundary_model = boundary_model or BoundaryModel(algebra)
    start = time.perf_counter()
    V = graph.num_entities
    edges = np.arange(graph.num_edges) if mask is None else np.flatnonzero(mask)
    heads, tails = graph.heads[edges], graph.tails[edges]
    h0 = boundary_model.table(V, u, q)
    h = h0.copy()
    stats = PropagationStats()
    for t in range(1, num_steps + 1):
        if hasattr(algebra, "layer"):
            algebra.layer = t - 1
        w = _edge_weights(weight_model, graph, q, t - 1)[edges]
        msgs = algebra.multiply(h[heads], w)
        agg = algebra.segment_aggregate(msgs, tails, V, graph.degrees)
        h = algebra.add(h0, agg)
        stats.messages_per_step.append(len(edges))
        stats.nodes_per_step.append(V)
    stats.wall_time = time.perf_counter() - start
    return PropagationResult(h, np.ones(V), stats)


def select_top(scores: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    """Top-``k`` candidates by score, ties to the smaller candidate id."""
    candidates = np.sort(np.asarray(candidates, np.int64))
    batch = RankedBatch(np.asarray(scores, np.float64)[candidates], np.array([len(candidates)]))
    _, idx, _ = padding_free_topk(batch, k)
    return candidates[idx]


def astar_propagate(
    graph: KnowledgeGraph,
    query: tuple[int, int],
    budget: BudgetConfig,
    algebra: PathAlgebra,
    weight_model: EdgeWeightModel,
    priority_fn: Callable[[np.ndarray, int], np.ndarray],
    mask: np.ndarray | None = None,
    boundary_model: BoundaryModel | None = None,
    node_selections: Sequence[Sequence[int]] | None = None,
    edge_selections: Sequence[Sequence[int]] | None = None,
    weight_messages: bool = True,
) -> PropagationResult:
    """Priority-pruned propagation for one query ``(u, q)``.

    Each step picks the top-K reached nodes by the previous priority (every
    node when ``K >= |V|``), keeps the top-L visible out-edges ranked by the
    priority of their tail, scales each message by its head's priority and
    recomputes priorities from the new representations. Nodes that receive no
    message fall back to the boundary value.

    ``node_selections``/``edge_selections`` replace the top-K/top-L choice at
    every step (frozen selections for gradient checks and oracle tests).
    """
    u, q = query
    boundary_model = boundary_model or BoundaryModel(algebra)
    start = time.perf_counter()
    V, E = graph.num_entities, graph.num_edges
    K, L = budget.limits(V, E)
    visible = np.ones(E, dtype=bool) if mask is None else np.asarray(mask, bool)
    h0 = boundary_model.table(V, u, q)
    h = h0.copy()
    s = np.asarray(priority_fn(h, 0), np.float64)
    result = PropagationResult(h, s, PropagationStats(), priorities=[s])
    offsets = graph.head_offsets
    for t in range(1, budget.num_steps + 1):
        if K >= V:
            pool = np.arange(V)
        else:
            pool = np.flatnonzero(algebra.reached(h))
        if node_selections is not None:
            X = np.asarray(node_selections[t - 1], np.int64)
        else:
            X = select_top(s, pool, K)
        if len(X):
            cand = np.concatenate([np.arange(offsets[x], offsets[x + 1]) for x in X])
        else:
            cand = np.zeros(0, np.int64)
        cand = cand[visible[cand]]
        if edge_selections is not None:
            sel = np.asarray(edge_selections[t - 1], np.int64)
        else:
            sel = select_top(s[graph.tails], cand, L)
            # messages go out in edge order so sums match the unpruned run bit for bit
            sel = np.sort(sel)
        if hasattr(algebra, "layer"):
            algebra.layer = t - 1
        heads, tails = graph.heads[sel], graph.tails[sel]
        w = _edge_weights(weight_model, graph, q, t - 1)[sel]
        msgs = algebra.multiply(h[heads], w)
        if weight_messages:
            msgs = algebra.scale(msgs, s[heads])
        touched = np.unique(tails)
        agg = algebra.segment_aggregate(msgs, tails, V, graph.degrees)
        h_new = h0.copy()
        h_new[touched] = algebra.add(h0[touched], agg[touched])
        result.frontiers.append(Frontier(t, X, sel, pool, s))
        h = h_new
        s = np.asarray(priority_fn(h, t), np.float64)
        result.priorities.append(s)
        result.stats.messages_per_step.append(len(sel))
        result.stats.nodes_per_step.append(len(X))
    result.h, result.priority = h, s
    result.stats.wall_time = time.perf_counter() - start
    return result


def exhaustive_paths(
    graph: KnowledgeGraph,
    u: int,
    v: int | None,
    max_len: int,
    mask: np.ndarray | None = None,
    cap: int = 1_000_000,
) -> list[tuple[int, ...]]:
    """All walks ``u -> v`` with 1..max_len edges as edge-index tuples, lexicographic.

    ``v=None`` keeps walks ending anywhere.

    Walks may revisit nodes. Raises :class:`WalkBudgetExceeded` once more than
    ``cap`` partial walks have been expanded.
    """
    visible = np.ones(graph.num_edges, bool) if mask is None else np.asarray(mask, bool)
    offsets, tails = graph.head_offsets, graph.tails
    out: list[tuple[int, ...]] = []
    expanded = 0
    stack: list[int] = []

    def walk(x: int):
        nonlocal expanded
        if len(stack) == max_len:
            return
        for e in range(offsets[x], offsets[x + 1]):
            if not visible[e]:
                continue
            expanded += 1
            if expanded > cap:
                raise WalkBudgetExceeded(f"more than {cap} walks from {u} within {max_len} steps")
            stack.append(e)
            y = int(tails[e])
            if v is None or y == v:
                out.append(tuple(stack))
            walk(y)
            stack.pop()

    walk(u)
    out.sort()
    return out


def check_contiguous(graph: KnowledgeGraph, path: Sequence[int], start: int | None = None):
    prev = start
    for e in path:
        if prev is not None and graph.heads[e] != prev:
            raise PathError(f"edge {e} starts at {graph.heads[e]}, expected {prev}")
        prev = int(graph.tails[e])


def evaluate_path(
    algebra: PathAlgebra,
    weight_model: EdgeWeightModel,
    boundary_model: BoundaryModel,
    graph: KnowledgeGraph,
    query: tuple[int, int],
    path: Sequence[int],
):
    """``h0(u) (x) w(e1) (x) ... (x) w(ek)`` folded left to right."""
    u, q = query
    check_contiguous(graph, path, u)
    value = boundary_model.boundary(u, q, u)
    for step, e in enumerate(path):
        if hasattr(algebra, "layer"):
            algebra.layer = step
        w = weight_model.weights(np.array([graph.relations[e]]), q, step)[0]
        value = algebra.multiply(np.asarray(value)[None], np.asarray(w)[None])[0]
    return value
