"""Batched priority-pruned propagation on the autodiff tape.

A batch of queries ``(u_b, q_b)`` is propagated together. Node states are
stored sparsely as rows keyed by ``(sample, node)`` and kept sorted by
``sample * |V| + node``; a node without a row has the zero representation
and the baseline priority ``sigmoid(f(0))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import PNA_EPS
from .batching import RankedBatch, padding_free_topk, padding_free_unique
from .kg import KnowledgeGraph
from .nn import tape as T
from .nn.params import ParameterStore
from .nn.tape import Tensor
from .priority import PPRCache, degree_scores, init_priority_params
from .propagation import BudgetConfig


@dataclass
class ModelConfig:
    width: int = 32
    hidden: int = 64
    num_steps: int = 8
    aggregator: str = "sum"
    edge_weight: str = "per-relation-embedding"
    layerwise: bool = True
    priority: str = "neural"
    share_weights: bool = True
    node_ratio: float = 1.0
    degree_ratio: float = 1.0
    ppr_damping: float = 0.85
    ppr_iters: int = 20

    def __post_init__(self):
        if self.aggregator not in ("sum", "pna"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.edge_weight not in ("per-relation-embedding", "linear-over-query"):
            raise ValueError(f"unknown edge weight mode {self.edge_weight!r}")
        if self.priority not in ("neural", "ppr", "degree"):
            raise ValueError(f"unknown priority {self.priority!r}")
        if self.width < 1 or self.hidden < 1:
            raise ValueError("width and hidden must be positive")
        self.budget()  # validates ratios

    def budget(self) -> BudgetConfig:
        return BudgetConfig(self.node_ratio, self.degree_ratio, self.num_steps)


@dataclass
class StepRecord:
    """Selections of one iteration plus the priorities they were made with."""

    node_sample: np.ndarray
    nodes: np.ndarray
    edge_sample: np.ndarray
    edges: np.ndarray
    # s^(t-1) on the rows that existed before the step
    row_sample: np.ndarray
    row_node: np.ndarray
    row_priority: np.ndarray
    baseline: float


@dataclass
class ForwardOutput:
    num_nodes: int
    row_sample: np.ndarray
    row_node: np.ndarray
    h: Tensor
    score_rows: Tensor  # predicted s^(T) per row
    baseline: Tensor    # (1,) score of rows that were never reached
    steps: list[StepRecord] = field(default_factory=list)
    messages: np.ndarray | None = None  # (B, T) edges propagated
    multiply_calls: int = 0

    def _lookup(self, sample, nodes) -> np.ndarray:
        return _lookup(self.row_sample * self.num_nodes + self.row_node,
                       np.asarray(sample) * self.num_nodes + np.asarray(nodes))

    def scores(self, sample, nodes) -> Tensor:
        ext = T.concat([self.score_rows, self.baseline], axis=0)
        return T.gather(ext, self._lookup(sample, nodes))

    def dense_scores(self, batch_size: int) -> np.ndarray:
        out = np.full((batch_size, self.num_nodes), float(self.baseline.value[0]))
        out[self.row_sample, self.row_node] = self.score_rows.value
        return out


def _lookup(sorted_codes: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Row index of each code, or ``len(sorted_codes)`` when absent."""
    n = len(sorted_codes)
    idx = np.searchsorted(sorted_codes, codes)
    found = idx < n
    found[found] = sorted_codes[idx[found]] == codes[found]
    return np.where(found, idx, n)


def _expand_out_edges(graph: KnowledgeGraph, sample: np.ndarray, nodes: np.ndarray):
    off = graph.head_offsets
    counts = off[nodes + 1] - off[nodes]
    total = int(counts.sum())
    starts = np.repeat(off[nodes], counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(sample, counts), starts + within


def _topk_grouped(sample: np.ndarray, values: np.ndarray, keys: np.ndarray, batch_size: int, k: int):
    """Top-``k`` per sample; ties go to the smaller key. Returns positions into the inputs."""
    order = np.lexsort((keys, sample))
    sizes = np.bincount(sample, minlength=batch_size)
    _, idx, _ = padding_free_topk(RankedBatch(values[order], sizes), k)
    return order[idx]


class AStarModel:
    """Trainable propagation with a neural priority that doubles as the predictor."""

    def __init__(self, config: ModelConfig, num_relations: int, store: ParameterStore | None = None,
                 seed: int = 0, delta: float = 1.0):
        self.config = config
        self.num_relations = num_relations  # inverse-augmented count, 2R
        if store is None:
            store = ParameterStore()
            store.meta["delta"] = float(delta)
            self.init_parameters(store, np.random.default_rng(seed))
        self.store = store
        self._static: dict[int, object] = {}

    @property
    def delta(self) -> float:
        return float(self.store.meta.get("delta", 1.0))

    @property
    def pred_prefix(self) -> str:
        return "priority" if self.config.share_weights else "predictor"

    def init_parameters(self, store: ParameterStore, rng: np.random.Generator):
        c, R2, d = self.config, self.num_relations, self.config.width
        # embedding tables are one-hot lookups, so fan_in = 1
        store.init_uniform("query", (R2, d), 1, rng)
        for t in range(c.num_steps if c.layerwise else 1):
            if c.edge_weight == "per-relation-embedding":
                store.init_uniform(f"relation.{t}", (R2, d), 1, rng)
            else:
                store.init_uniform(f"relation_linear.{t}.weight", (d, R2 * d), d, rng)
                store.init_uniform(f"relation_linear.{t}.bias", (R2 * d,), d, rng)
        if c.aggregator == "pna":
            for t in range(c.num_steps):
                store.init_uniform(f"pna.{t}", (12 * d, d), 12 * d, rng)
        init_priority_params(store, "priority", d, c.hidden, rng)
        if not c.share_weights:
            init_priority_params(store, "predictor", d, c.hidden, rng)
        store.meta["config"] = dict(vars(c))
        store.meta["num_relations"] = R2

    # -- tape building blocks ---------------------------------------------
    def _mlp(self, h: Tensor, q_rows: Tensor, row_query: np.ndarray, prefix: str) -> Tensor:
        p = self.store.leaf
        x = T.concat([h, T.gather(q_rows, row_query)], axis=1)
        gate = T.relu(x @ p(f"{prefix}.g.0.weight") + p(f"{prefix}.g.0.bias")) @ p(f"{prefix}.g.1.weight")
        gate = gate + p(f"{prefix}.g.1.bias")
        return self._head(h * gate, prefix)

    def _head(self, s_vec: Tensor, prefix: str) -> Tensor:
        p = self.store.leaf
        z = T.relu(s_vec @ p(f"{prefix}.f.0.weight") + p(f"{prefix}.f.0.bias"))
        logit = z @ p(f"{prefix}.f.1.weight") + p(f"{prefix}.f.1.bias")
        return T.sigmoid(T.reshape(logit, (-1,)))

    def _baseline(self, prefix: str) -> Tensor:
        return self._head(Tensor(np.zeros((1, self.config.width))), prefix)

    def _edge_table(self, step: int, query_rel: np.ndarray) -> tuple[Tensor, bool]:
        """Edge weight rows and whether they are stacked per sample (B * 2R rows)."""
        c = self.config
        t = step if c.layerwise else 0
        if c.edge_weight == "per-relation-embedding":
            return self.store.leaf(f"relation.{t}"), False
        q = T.gather(self.store.leaf("query"), query_rel)
        flat = q @ self.store.leaf(f"relation_linear.{t}.weight") + self.store.leaf(f"relation_linear.{t}.bias")
        return T.reshape(flat, (len(query_rel) * self.num_relations, c.width)), True

    def _aggregate(self, step, msg: Tensor, target: np.ndarray, n: int, degrees: np.ndarray) -> Tensor:
        if self.config.aggregator == "sum":
            return T.segment_sum(msg, target, n)
        count = np.bincount(target, minlength=n).astype(np.float64)
        has = (count > 0).astype(np.float64)[:, None]
        inv = (1.0 / np.where(count > 0, count, 1.0))[:, None]
        mean = T.segment_sum(msg, target, n) * inv
        sq = T.segment_sum(msg * msg, target, n) * inv
        var = T.relu(sq - mean * mean)
        std = T.sqrt(var + PNA_EPS) - np.sqrt(PNA_EPS)
        mx = T.segment_max(msg, target, n, fill=0.0)
        mn = T.scalar_mul(T.segment_max(T.scalar_mul(msg, -1.0), target, n, fill=0.0), -1.0)
        stats = T.concat([mean, mx, mn, std], axis=1) * has
        logd = np.log(degrees.astype(np.float64) + 1.0)[:, None]
        amp = logd / self.delta
        att = np.where(logd > 0, self.delta / np.where(logd > 0, logd, 1.0), 0.0)
        feats = T.concat([stats, stats * amp, stats * att], axis=1)
        return feats @ self.store.leaf(f"pna.{step}")

    def static_scores(self, graph: KnowledgeGraph, heads: np.ndarray) -> np.ndarray:
        """Handcrafted priorities, one row per query head."""
        key = id(graph)
        if self.config.priority == "degree":
            return np.broadcast_to(degree_scores(graph), (len(heads), graph.num_entities))
        cache = self._static.get(key)
        if cache is None or cache.graph is not graph:
            cache = self._static[key] = PPRCache(graph, self.config.ppr_damping, self.config.ppr_iters)
        return np.stack([cache(int(u)) for u in heads]) if len(heads) else np.zeros((0, graph.num_entities))

    # -- forward ------------------------------------------------------------
    def forward(self, graph: KnowledgeGraph, heads, query_rels, mask: np.ndarray | None = None,
                frozen: list[StepRecord] | None = None, record: bool = True) -> ForwardOutput:
        """Propagate a batch of queries; ``frozen`` replays earlier selections."""
        c = self.config
        heads = np.asarray(heads, np.int64)
        query_rels = np.asarray(query_rels, np.int64)
        B, V = len(heads), graph.num_entities
        K, L = c.budget().limits(V, graph.num_edges)
        visible = np.ones(graph.num_edges, bool) if mask is None else np.asarray(mask, bool)
        neural = c.priority == "neural"
        static = None if neural else self.static_scores(graph, heads)
        query = self.store.leaf("query")
        q_rows = T.gather(query, query_rels)  # boundary value of each sample

        row_s = np.arange(B, dtype=np.int64)
        row_v = heads.copy()
        h = q_rows
        sel = self._mlp(h, q_rows, row_s, "priority") if neural else None
        base = self._baseline("priority")
        messages = np.zeros((B, c.num_steps), np.int64)
        steps: list[StepRecord] = []
        mult = 0

        for t in range(c.num_steps):
            codes = row_s * V + row_v
            if neural:
                row_scores, base_val = sel.value, float(base.value[0])

                def prio(s, v):
                    idx = _lookup(codes, s * V + v)
                    return np.append(row_scores, base_val)[idx]
            else:
                row_scores, base_val = static[row_s, row_v], 0.0

                def prio(s, v):
                    return static[s, v]

            if frozen is not None:
                X_s, X_v = frozen[t].node_sample, frozen[t].nodes
                E_s, E = frozen[t].edge_sample, frozen[t].edges
            else:
                if K >= V:
                    pool_s, pool_v = np.repeat(np.arange(B), V), np.tile(np.arange(V), B)
                    pool_scores = prio(pool_s, pool_v)
                else:
                    pool_s, pool_v, pool_scores = row_s, row_v, row_scores
                pick = _topk_grouped(pool_s, pool_scores, pool_v, B, K)
                X_s, X_v = pool_s[pick], pool_v[pick]
                cand_s, cand = _expand_out_edges(graph, X_s, X_v)
                keep = visible[cand]
                cand_s, cand = cand_s[keep], cand[keep]
                pick = _topk_grouped(cand_s, prio(cand_s, graph.tails[cand]), cand, B, L)
                order = np.lexsort((cand[pick], cand_s[pick]))
                E_s, E = cand_s[pick][order], cand[pick][order]
            if record:
                steps.append(StepRecord(X_s, X_v, E_s, E, row_s, row_v, np.asarray(row_scores).copy(), base_val))
            messages[:, t] = np.bincount(E_s, minlength=B)

            e_heads, e_tails = graph.heads[E], graph.tails[E]
            src = _lookup(codes, E_s * V + e_heads)
            table, stacked = self._edge_table(t, query_rels)
            widx = graph.relations[E] + (E_s * self.num_relations if stacked else 0)
            mult += len(E)

            # rows of the next step: tails of propagated edges plus every start node
            all_s = np.concatenate([E_s, np.arange(B)])
            all_v = np.concatenate([e_tails, heads])
            order = np.argsort(all_s, kind="stable")
            uniq, sizes = padding_free_unique(RankedBatch(all_v[order], np.bincount(all_s, minlength=B)))
            row_s = np.repeat(np.arange(B), sizes)
            row_v = uniq
            new_codes = row_s * V + row_v
            target = np.searchsorted(new_codes, E_s * V + e_tails)
            if c.aggregator == "sum":
                # a missing source row has the zero representation and sends nothing
                live = src < len(codes)
                msg = T.gather(h, src[live]) * T.gather(table, widx[live])
                if neural:
                    msg = msg * T.reshape(T.gather(sel, src[live]), (-1, 1))
                agg = T.segment_sum(msg, target[live], len(row_s))
            else:
                h_ext = T.concat([h, Tensor(np.zeros((1, c.width)))], axis=0)
                msg = T.gather(h_ext, src) * T.gather(table, widx)
                if neural:
                    s_ext = T.concat([sel, Tensor(np.zeros(1))], axis=0)
                    msg = msg * T.reshape(T.gather(s_ext, src), (-1, 1))
                agg = self._aggregate(t, msg, target, len(row_s), graph.degrees[row_v])
            starts = np.searchsorted(row_s * V + row_v, np.arange(B) * V + heads)
            h = T.index_add(agg, starts, q_rows)
            if neural:
                sel = self._mlp(h, q_rows, row_s, "priority")

        if neural and c.share_weights:
            pred, pred_base = sel, base
        else:
            pred = self._mlp(h, q_rows, row_s, self.pred_prefix)
            pred_base = self._baseline(self.pred_prefix)
        return ForwardOutput(V, row_s, row_v, h, pred, pred_base, steps, messages, mult)

    def predict(self, graph: KnowledgeGraph, heads, query_rels, mask=None) -> np.ndarray:
        """Dense ``(B, |V|)`` scores without recording a tape."""
        with T.no_grad():
            out = self.forward(graph, heads, query_rels, mask, record=False)
        return out.dense_scores(len(np.atleast_1d(heads)))
