"""Brute-force checks of the propagation engines on small random graphs.

Walk enumeration is the ground truth: for an exact semiring the value at
``v`` must equal the oplus over every walk ``u -> v`` of at most ``T``
edges (plus the empty walk when ``v == u``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import Boolean, BoundaryModel, Counting, EdgeWeightModel, MinPlus, NeuralAlgebra, PathAlgebra
from .kg import KnowledgeGraph, Triplet, augment_inverse, build_csr
from .nn.params import ParameterStore
from .priority import UnitPriority, init_priority_params, ppr_scores, StaticPriority
from .propagation import BudgetConfig, astar_propagate, bellman_ford_full, evaluate_path, exhaustive_paths

MINPLUS_TOL = 1e-9


def random_graph(rng: np.random.Generator, max_nodes: int = 12, max_edges: int = 40,
                 max_relations: int = 3, min_nodes: int = 2) -> KnowledgeGraph:
    """Random inverse-augmented multigraph with at most ``max_edges`` edges after augmentation."""
    V = int(rng.integers(min_nodes, max_nodes + 1))
    R = int(rng.integers(1, max_relations + 1))
    m = int(rng.integers(0, max_edges // 2 + 1))
    facts = [Triplet(int(rng.integers(V)), int(rng.integers(R)), int(rng.integers(V))) for _ in range(m)]
    return build_csr(augment_inverse(facts, R), V, R)


def random_weights(algebra: PathAlgebra, num_relations: int, rng: np.random.Generator) -> np.ndarray:
    """Per-relation weights that exercise the algebra's multiply."""
    if isinstance(algebra, MinPlus):
        return rng.uniform(0.1, 3.0, size=num_relations)
    if isinstance(algebra, Counting):
        return rng.integers(1, 4, size=num_relations).astype(np.int64)
    if isinstance(algebra, Boolean):
        return rng.random(num_relations) < 0.8
    raise TypeError(f"no random weights for {algebra.name}")


class ShiftedBoundary(BoundaryModel):
    """Deliberately wrong boundary (placed on ``u + 1``) for fault-injection runs."""

    def table(self, num_nodes, u, q):
        return super().table(num_nodes, (u + 1) % num_nodes, q)


def enumerate_value(algebra: PathAlgebra, weight_model: EdgeWeightModel, boundary: BoundaryModel,
                    graph: KnowledgeGraph, u: int, q: int, v: int, num_steps: int,
                    keep: Callable[[tuple[int, ...]], bool] | None = None,
                    walks: Sequence[tuple[int, ...]] | None = None):
    """Oplus of ``evaluate_path`` over the walks ``u -> v`` (filtered by ``keep``).

    ``walks`` may pass the already enumerated walks ``u -> v``.
    """
    values = []
    if u == v:
        values.append(boundary.boundary(u, q, u))
    for path in exhaustive_paths(graph, u, v, num_steps) if walks is None else walks:
        if keep is None or keep(path):
            values.append(evaluate_path(algebra, weight_model, boundary, graph, (u, q), path))
    return algebra.aggregate(np.asarray(values, dtype=algebra.dtype) if values else algebra.zeros(0))


@dataclass
class OracleReport:
    passed: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)

    def record(self, ok: bool, what: str):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.failures) < 20:
                self.failures.append(what)

    def merge(self, other: "OracleReport"):
        self.passed += other.passed
        self.failed += other.failed
        self.failures.extend(other.failures[: max(0, 20 - len(self.failures))])


EXACT = (Counting, Boolean, MinPlus)


def walks_by_end(graph: KnowledgeGraph, u: int, num_steps: int) -> dict[int, list[tuple[int, ...]]]:
    out: dict[int, list[tuple[int, ...]]] = {}
    for w in exhaustive_paths(graph, u, None, num_steps):
        out.setdefault(int(graph.tails[w[-1]]), []).append(w)
    return out


def check_equivalence(graph: KnowledgeGraph, algebra: PathAlgebra, rng: np.random.Generator,
                      num_steps: int, fault: bool = False) -> bool:
    """Full Bellman-Ford against walk enumeration for every (u, v) pair."""
    wm = EdgeWeightModel("constant", random_weights(algebra, graph.num_relations, rng),
                         num_relations=graph.num_relations)
    exact = BoundaryModel(algebra)
    used = ShiftedBoundary(algebra) if fault else exact
    tol = MINPLUS_TOL if isinstance(algebra, MinPlus) else 0.0
    for u in range(graph.num_entities):
        h = bellman_ford_full(graph, (u, 0), num_steps, algebra, wm, used).h
        ends = walks_by_end(graph, u, num_steps)
        for v in range(graph.num_entities):
            expect = enumerate_value(algebra, wm, exact, graph, u, 0, v, num_steps, walks=ends.get(v, []))
            if not algebra.equal(h[v], expect, tol):
                return False
    return True


def random_neural_store(graph: KnowledgeGraph, width: int, num_steps: int, rng: np.random.Generator,
                        aggregator: str = "sum") -> ParameterStore:
    store = ParameterStore()
    R2 = graph.num_relations
    store.init_uniform("query", (R2, width), 1, rng)
    for t in range(max(num_steps, 1)):
        store.init_uniform(f"relation.{t}", (R2, width), 1, rng)
        if aggregator == "pna":
            store.init_uniform(f"pna.{t}", (12 * width, width), 12 * width, rng)
    init_priority_params(store, "priority", width, 8, rng)
    return store


def check_unpruned(graph: KnowledgeGraph, algebra: PathAlgebra, rng: np.random.Generator, num_steps: int) -> bool:
    """Full budget with unit priority reproduces Bellman-Ford exactly."""
    if isinstance(algebra, NeuralAlgebra):
        algebra.store = random_neural_store(graph, algebra.width, num_steps, rng, algebra.aggregator)
        wm = EdgeWeightModel("per-relation-embedding", store=algebra.store, num_relations=graph.num_relations)
        bm = BoundaryModel(algebra, algebra.store)
    else:
        wm = EdgeWeightModel("constant", random_weights(algebra, graph.num_relations, rng),
                             num_relations=graph.num_relations)
        bm = BoundaryModel(algebra)
    budget = BudgetConfig(1.0, 1.0, num_steps)
    for u in range(graph.num_entities):
        q = int(rng.integers(graph.num_relations)) if graph.num_relations else 0
        full = bellman_ford_full(graph, (u, q), num_steps, algebra, wm, bm)
        pruned = astar_propagate(graph, (u, q), budget, algebra, wm, UnitPriority(), boundary_model=bm)
        if not np.array_equal(full.h, pruned.h):
            return False
        if pruned.stats.messages_per_step != [graph.num_edges] * num_steps:
            return False
    return True


def random_selections(graph: KnowledgeGraph, num_steps: int, rng: np.random.Generator) -> list[np.ndarray]:
    V = graph.num_entities
    return [np.sort(rng.choice(V, size=int(rng.integers(1, V + 1)), replace=False)) for _ in range(num_steps)]


def check_selection(graph: KnowledgeGraph, rng: np.random.Generator, num_steps: int) -> bool:
    """Counting with fixed node selections equals the count of admissible walks.

    A walk of ``m`` edges is admissible when its ``k``-th edge (1-based)
    starts in the node set of iteration ``T - m + k``: propagation only ever
    ends a walk at the last iteration, so short walks use the late steps.
    """
    algebra = Counting()
    wm = EdgeWeightModel("constant", 1, num_relations=graph.num_relations)
    bm = BoundaryModel(algebra)
    X = random_selections(graph, num_steps, rng)
    sets = [set(x.tolist()) for x in X]
    budget = BudgetConfig(1.0, 1.0, num_steps)
    T = num_steps

    def keep(path):
        m = len(path)
        return all(int(graph.heads[e]) in sets[T - m + k] for k, e in enumerate(path))

    for u in range(graph.num_entities):
        res = astar_propagate(graph, (u, 0), budget, algebra, wm, UnitPriority(), node_selections=X)
        ends = walks_by_end(graph, u, T)
        for v in range(graph.num_entities):
            if res.h[v] != enumerate_value(algebra, wm, bm, graph, u, 0, v, T, keep, ends.get(v, [])):
                return False
    return True


def budget_profile(graph: KnowledgeGraph, u: int, ratios: Sequence[float], num_steps: int,
                   beta: float = 1.0) -> tuple[list[int], list[int]]:
    """Counting-semiring total mass and total messages for each node ratio, PPR priority held fixed."""
    algebra = Counting()
    wm = EdgeWeightModel("constant", 1, num_relations=graph.num_relations)
    prio = StaticPriority(ppr_scores(graph, u))
    mass, msgs = [], []
    for a in ratios:
        res = astar_propagate(graph, (u, 0), BudgetConfig(a, beta, num_steps), algebra, wm, prio)
        mass.append(int(res.h.sum()))
        msgs.append(int(sum(res.stats.messages_per_step)))
    return mass, msgs


def run_suite(seed: int = 0, trials: int = 100, fault: bool = False, max_steps: int = 4,
              neural: bool = True) -> dict[str, OracleReport]:
    """Run every check on ``trials`` random graphs; returns a report per check."""
    rng = np.random.default_rng(seed)
    reports = {name: OracleReport() for name in
               ("equivalence.counting", "equivalence.boolean", "equivalence.min-plus",
                "unpruned.counting", "unpruned.boolean", "unpruned.min-plus", "unpruned.neural-sum",
                "unpruned.neural-pna", "selection.counting")}
    for i in range(trials):
        graph = random_graph(rng)
        T = int(rng.integers(0, max_steps + 1))
        tag = f"trial={i} V={graph.num_entities} E={graph.num_edges} T={T}"
        for cls in EXACT:
            alg = cls()
            reports[f"equivalence.{alg.name}"].record(check_equivalence(graph, alg, rng, T, fault), tag)
            reports[f"unpruned.{alg.name}"].record(check_unpruned(graph, alg, rng, T), tag)
        if neural:
            for agg in ("sum", "pna"):
                alg = NeuralAlgebra(width=4, aggregator=agg, delta=1.3)
                reports[f"unpruned.neural-{agg}"].record(check_unpruned(graph, alg, rng, T), tag)
        reports["selection.counting"].record(check_selection(graph, rng, max(T, 1)), tag)
    return reports
