import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathkg.algebra import BoundaryModel, EdgeWeightModel, NeuralAlgebra
from pathkg.kg import Triplet, augment_inverse, build_csr
from pathkg.model import AStarModel, ModelConfig
from pathkg.nn import Tape, bce_loss, tape_gradients
from pathkg.nn import tape as T
from pathkg.oracle import random_graph
from pathkg.priority import NeuralPriority, PPRCache, StaticPriority, degree_scores
from pathkg.propagation import astar_propagate


def dense_h(out, batch, V, d):
    h = np.zeros((batch, V, d))
    h[out.row_sample, out.row_node] = out.h.value
    return h


def reference(model, graph, u, q):
    c = model.config
    alg = NeuralAlgebra(width=c.width, aggregator=c.aggregator, store=model.store, delta=model.delta)
    wm = EdgeWeightModel(c.edge_weight, store=model.store, num_relations=model.num_relations, layerwise=c.layerwise)
    bm = BoundaryModel(alg, model.store)
    if c.priority == "neural":
        prio, weighted = NeuralPriority(model.store, q), True
    elif c.priority == "ppr":
        prio, weighted = StaticPriority(PPRCache(graph, c.ppr_damping, c.ppr_iters)(u)), False
    else:
        prio, weighted = StaticPriority(degree_scores(graph)), False
    return astar_propagate(graph, (u, q), c.budget(), alg, wm, prio, boundary_model=bm, weight_messages=weighted)


@given(st.integers(0, 10_000), st.sampled_from(["sum", "pna"]), st.sampled_from([1.0, 0.5, 0.2]),
       st.sampled_from([1.0, 0.4]), st.sampled_from(["per-relation-embedding", "linear-over-query"]),
       st.sampled_from(["neural", "ppr", "degree"]), st.booleans())
def test_batched_forward_matches_reference(seed, agg, alpha, beta, edge, priority, layerwise):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, max_nodes=10, max_edges=30)
    cfg = ModelConfig(width=3, hidden=5, num_steps=3, aggregator=agg, node_ratio=alpha, degree_ratio=beta,
                      edge_weight=edge, priority=priority, layerwise=layerwise)
    model = AStarModel(cfg, g.num_relations, seed=seed, delta=0.8)
    B = 3
    heads, qs = rng.integers(g.num_entities, size=B), rng.integers(g.num_relations, size=B)
    out = model.forward(g, heads, qs)
    H = dense_h(out, B, g.num_entities, 3)
    for b in range(B):
        res = reference(model, g, int(heads[b]), int(qs[b]))
        assert np.allclose(H[b], res.h, atol=1e-10)
        assert res.stats.messages_per_step == out.messages[b].tolist()
        if priority == "neural":
            assert np.allclose(out.dense_scores(B)[b], res.priority, atol=1e-10)
    assert out.multiply_calls == out.messages.sum()


def test_full_budget_sends_every_edge_each_step(toy_graph):
    model = AStarModel(ModelConfig(width=4, hidden=4, num_steps=3), toy_graph.num_relations)
    out = model.forward(toy_graph, [0, 3], [1, 2])
    assert out.messages.tolist() == [[14, 14, 14], [14, 14, 14]]


def test_smallest_budget_one_message_per_step(toy_graph):
    model = AStarModel(ModelConfig(width=4, hidden=4, num_steps=3, node_ratio=0.01, degree_ratio=0.01),
                       toy_graph.num_relations)
    out = model.forward(toy_graph, [0], [1])
    assert out.messages.tolist() == [[1, 1, 1]]


def test_scores_of_unreached_nodes_use_baseline(toy_graph):
    model = AStarModel(ModelConfig(width=4, hidden=4, num_steps=1, node_ratio=0.01), toy_graph.num_relations)
    out = model.forward(toy_graph, [0], [0])
    dense = out.dense_scores(1)
    reached = set(out.row_node.tolist())
    for v in range(6):
        if v not in reached:
            assert dense[0, v] == out.baseline.value[0]
        assert out.scores(np.array([0]), np.array([v])).value[0] == dense[0, v]


def test_frozen_selection_gives_identical_gradients(toy_graph, rng):
    model = AStarModel(ModelConfig(width=4, hidden=6, num_steps=2, node_ratio=0.5, degree_ratio=0.5),
                       toy_graph.num_relations, seed=1)
    heads, qs = np.array([0, 4]), np.array([0, 3])
    frozen = model.forward(toy_graph, heads, qs).steps

    def loss(store):
        out = model.forward(toy_graph, heads, qs, frozen=frozen)
        pos = out.scores(np.arange(2), np.array([3, 1]))
        neg = T.reshape(out.scores(np.repeat(np.arange(2), 2), np.array([5, 2, 0, 4])), (2, 2))
        return bce_loss(pos, neg)[0]

    g1, g2 = tape_gradients(loss, model.store), tape_gradients(loss, model.store)
    for k in g1:
        assert np.array_equal(g1[k], g2[k])
    assert any(np.abs(v).sum() > 0 for v in g1.values())


def test_unshared_predictor_has_own_parameters(toy_graph):
    model = AStarModel(ModelConfig(width=4, hidden=4, num_steps=2, share_weights=False), toy_graph.num_relations)
    assert "predictor.f.1.bias" in model.store
    with Tape() as tape:
        out = model.forward(toy_graph, [1], [0])
        loss = T.sum(out.score_rows)
    tape.backward(loss)
    model.store.collect_grads(tape)
    assert np.abs(model.store.grads["predictor.f.1.bias"]).sum() > 0


def test_predict_is_deterministic(toy_graph):
    model = AStarModel(ModelConfig(width=4, hidden=4, num_steps=2, node_ratio=0.5), toy_graph.num_relations, seed=3)
    a = model.predict(toy_graph, [0, 1, 2], [0, 1, 2])
    b = AStarModel(ModelConfig(width=4, hidden=4, num_steps=2, node_ratio=0.5), toy_graph.num_relations,
                   seed=3).predict(toy_graph, [0, 1, 2], [0, 1, 2])
    assert np.array_equal(a, b) and a.shape == (3, 6)


def test_mask_hides_query_edge_from_batch():
    g = build_csr(augment_inverse([Triplet(0, 0, 1)], 1), 2, 1)
    model = AStarModel(ModelConfig(width=2, hidden=2, num_steps=2), 2)
    out = model.forward(g, [0], [0], mask=np.array([False, False]))
    assert out.row_node.tolist() == [0]


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(aggregator="mean")
    with pytest.raises(ValueError):
        ModelConfig(priority="random")
    with pytest.raises(ValueError):
        ModelConfig(node_ratio=0)
