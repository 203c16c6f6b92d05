"""Rank the paths a trained model relied on, from its recorded per-step priorities."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kg import KnowledgeGraph, Triplet
from .model import AStarModel
from .nn import tape as T


@dataclass(frozen=True)
class ScoredPath:
    edges: tuple[Triplet, ...]
    importance: float
    ratios: tuple[float, ...]
    edge_ids: tuple[int, ...] = ()

    def render(self, entity_names: Sequence[str] | None = None,
               relation_names: Sequence[str] | None = None) -> str:
        def ent(i):
            return entity_names[i] if entity_names is not None else str(i)

        def rel(r):
            return relation_names[r] if relation_names is not None else str(r)

        parts = [ent(self.edges[0].head)]
        for h, r, t in self.edges:
            parts.append(f"-{rel(r)}-> {ent(t)}")
        return f"{self.importance:.6f}\t" + " ".join(parts)


@dataclass
class PriorityTrace:
    """Priorities and propagated edges of one query, step by step.

    ``values[t]`` holds ``s^(t)`` over all nodes with NaN for nodes that had
    no representation at that step; ``edges[t]`` is the edge set used by
    iteration ``t + 1``.
    """

    graph: KnowledgeGraph
    source: int
    values: list[np.ndarray]
    edges: list[np.ndarray]

    @property
    def num_steps(self) -> int:
        return len(self.edges)


def record_trace(model: AStarModel, graph: KnowledgeGraph, u: int, q: int,
                 mask: np.ndarray | None = None) -> PriorityTrace:
    with T.no_grad():
        out = model.forward(graph, [u], [q], mask, record=True)
    values, edges = [], []
    for step in out.steps:
        v = np.full(graph.num_entities, np.nan)
        v[step.row_node] = step.row_priority
        values.append(v)
        edges.append(np.sort(step.edges))
    return PriorityTrace(graph, u, values, edges)


def _ratio(values: np.ndarray, x: int) -> float:
    top = np.nanmax(values) if np.any(~np.isnan(values)) else 0.0
    v = values[x]
    if np.isnan(v):
        return 0.0
    if top <= 0:
        return 1.0
    return float(v / top)


def path_importance(priorities: Sequence[np.ndarray], path: Sequence[Triplet]) -> float:
    """Mean over the path's edges of ``s^(t-1)(head_t) / max_x s^(t-1)(x)``.

    ``priorities[t]`` is a dense vector over nodes; NaN entries are nodes that
    were not recorded at that step and count as zero.
    """
    if not path:
        raise ValueError("a path needs at least one edge")
    if len(path) > len(priorities):
        raise ValueError(f"path of length {len(path)} exceeds the {len(priorities)} recorded steps")
    prev = None
    ratios = []
    for t, (h, _, tail) in enumerate(path):
        if prev is not None and h != prev:
            raise ValueError(f"edge {t} starts at {h}, expected {prev}")
        prev = tail
        ratios.append(_ratio(np.asarray(priorities[t], np.float64), h))
    return float(np.mean(ratios))


def beam_search_paths(trace: PriorityTrace, answer: int, beam: int | None = 10,
                      max_len: int | None = None) -> list[ScoredPath]:
    """Paths ``u -> answer`` whose ``t``-th edge was propagated at iteration ``t``.

    Partial paths are scored by the running mean of their normalised
    priorities and only the best ``beam`` survive each step (``None`` keeps
    all). Paths reaching ``answer`` are emitted at any length up to
    ``max_len`` and returned best first, at most ``beam`` of them.
    """
    g = trace.graph
    steps = trace.num_steps if max_len is None else min(max_len, trace.num_steps)
    # partial paths as (edge ids, per-step ratios)
    frontier: list[tuple[tuple[int, ...], tuple[float, ...]]] = [((), ())]
    emitted: list[ScoredPath] = []
    for t in range(steps):
        allowed = trace.edges[t]
        by_head: dict[int, list[int]] = {}
        for e in allowed:
            by_head.setdefault(int(g.heads[e]), []).append(int(e))
        ext = []
        for eids, ratios in frontier:
            x = trace.source if not eids else int(g.tails[eids[-1]])
            r = _ratio(trace.values[t], x)
            for e in by_head.get(x, ()):
                ext.append((eids + (e,), ratios + (r,)))
        if beam is not None and len(ext) > beam:
            ext = heapq.nsmallest(beam, ext, key=lambda p: (-float(np.mean(p[1])), p[0]))
        frontier = ext
        for eids, ratios in frontier:
            if int(g.tails[eids[-1]]) == answer:
                edges = tuple(g.edge(e) for e in eids)
                emitted.append(ScoredPath(edges, float(np.mean(ratios)), ratios, eids))
        if not frontier:
            break
    emitted.sort(key=lambda p: (-p.importance, p.edge_ids))
    return emitted if beam is None else emitted[:beam]


def explain(model: AStarModel, graph: KnowledgeGraph, u: int, q: int, answer: int, beam: int = 10,
            mask: np.ndarray | None = None) -> list[ScoredPath]:
    return beam_search_paths(record_trace(model, graph, u, q, mask), answer, beam)


def format_listing(paths: Sequence[ScoredPath], entity_names=None, relation_names=None) -> str:
    return "\n".join(p.render(entity_names, relation_names) for p in paths)


def _quote(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(paths: Sequence[ScoredPath], entity_names=None, relation_names=None, name: str = "explanation") -> str:
    """A DOT digraph with the union of the paths' edges, labelled by relation and best score."""
    def ent(i):
        return entity_names[i] if entity_names is not None else str(i)

    def rel(r):
        return relation_names[r] if relation_names is not None else str(r)

    best: dict[Triplet, float] = {}
    nodes: list[int] = []
    for p in paths:
        for e in p.edges:
            best[e] = max(best.get(e, 0.0), p.importance)
            for x in (e.head, e.tail):
                if x not in nodes:
                    nodes.append(x)
    lines = [f"digraph {_quote(name)} {{"]
    for x in nodes:
        lines.append(f"  {_quote(ent(x))};")
    for (h, r, t), s in best.items():
        lines.append(f"  {_quote(ent(h))} -> {_quote(ent(t))} [label={_quote(f'{rel(r)} {s:.3f}')}];")
    lines.append("}")
    return "\n".join(lines)
