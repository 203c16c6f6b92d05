import numpy as np
import pytest
from hypothesis import given, strategies as st

from pathkg.algebra import (
    Boolean,
    BoundaryModel,
    Counting,
    EdgeWeightModel,
    MinPlus,
    NeuralAlgebra,
    aggregate,
    boundary,
    make_algebra,
    multiply,
    pna_features,
)
from pathkg.nn.params import ParameterStore

finite = st.floats(-1e3, 1e3, allow_nan=False)
minplus_vals = st.one_of(finite, st.just(np.inf))
counts = st.integers(0, 10**6)


def test_multiply_examples():
    assert multiply(MinPlus(), 3.0, 4.0) == 7.0
    assert multiply(Counting(), 2, 1) == 2
    alg = NeuralAlgebra(width=2)
    assert multiply(alg, np.array([0.5, 2.0]), np.array([2.0, 0.5])).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        alg.multiply(np.ones(3), np.ones(3))


def test_aggregate_examples():
    assert aggregate(MinPlus(), [7.0, 5.0, 9.0]) == 5.0
    assert aggregate(Counting(), []) == 0
    assert aggregate(Boolean(), []) == False  # noqa: E712
    assert aggregate(NeuralAlgebra(width=2), [[1, 0], [0, 1], [2, 2]]).tolist() == [3.0, 3.0]


def test_boundary_examples():
    assert boundary(BoundaryModel(MinPlus()), 2, 0, 2) == 0.0
    assert boundary(BoundaryModel(Counting()), 1, 0, 2) == 0
    store = ParameterStore()
    store.add("query", np.arange(12.0).reshape(6, 2))
    bm = BoundaryModel(NeuralAlgebra(width=2), store)
    assert bm.boundary(4, 3, 4).tolist() == [6.0, 7.0]
    assert bm.boundary(4, 3, 1).tolist() == [0.0, 0.0]


@given(minplus_vals, minplus_vals, minplus_vals)
def test_minplus_semiring_laws(a, b, c):
    alg = MinPlus()
    lhs = alg.multiply(a, alg.add(b, c))
    rhs = alg.add(alg.multiply(a, b), alg.multiply(a, c))
    assert lhs == rhs
    assert alg.multiply(a, alg.one_value()) == a
    assert alg.add(a, alg.zeros(1)[0]) == a
    assert alg.add(a, b) == alg.add(b, a)
    assert alg.add(alg.add(a, b), c) == alg.add(a, alg.add(b, c))


@given(counts, counts, counts)
def test_counting_semiring_laws(a, b, c):
    alg = Counting()
    assert alg.multiply(a, alg.add(b, c)) == alg.add(alg.multiply(a, b), alg.multiply(a, c))
    assert alg.multiply(a, alg.one_value()) == a
    assert alg.add(a, alg.zeros(1)[0]) == a
    assert alg.add(alg.add(a, b), c) == alg.add(a, alg.add(b, c))


@given(st.booleans(), st.booleans(), st.booleans())
def test_boolean_semiring_laws(a, b, c):
    alg = Boolean()
    assert alg.multiply(a, alg.add(b, c)) == alg.add(alg.multiply(a, b), alg.multiply(a, c))
    assert alg.multiply(a, alg.one_value()) == a
    assert alg.add(a, alg.zeros(1)[0]) == a


def test_neural_not_flagged_semiring():
    assert not NeuralAlgebra().is_semiring
    assert all(make_algebra(n).is_semiring for n in ("min-plus", "counting", "boolean"))
    with pytest.raises(ValueError):
        make_algebra("tropical")


def test_neural_is_pure(rng):
    alg = NeuralAlgebra(width=3)
    h, w = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert np.array_equal(alg.multiply(h, w), alg.multiply(h, w))


def test_pna_features_against_loop(rng):
    d, n = 3, 4
    vals = rng.normal(size=(9, d))
    seg = rng.integers(0, n - 1, size=9)  # last segment stays empty
    deg = np.array([1, 3, 0, 5])
    delta = 1.2
    out = pna_features(vals, seg, n, deg, delta)
    for s in range(n):
        rows = vals[seg == s]
        if len(rows) == 0:
            assert np.all(out[s] == 0)
            continue
        std = np.sqrt(rows.var(axis=0) + 1e-6) - np.sqrt(1e-6)
        stats = np.concatenate([rows.mean(0), rows.max(0), rows.min(0), std])
        logd = np.log(deg[s] + 1)
        att = delta / logd if logd > 0 else 0.0
        np.testing.assert_allclose(out[s], np.concatenate([stats, stats * logd / delta, stats * att]), atol=1e-12)


def test_pna_aggregate_uses_projection(rng):
    store = ParameterStore()
    store.add("pna.0", rng.normal(size=(24, 2)))
    alg = NeuralAlgebra(width=2, aggregator="pna", store=store, delta=1.0)
    vals = rng.normal(size=(3, 2))
    got = alg.aggregate(vals, degree=3)
    want = pna_features(vals, np.zeros(3, int), 1, np.array([3]), 1.0)[0] @ store["pna.0"]
    np.testing.assert_allclose(got, want)


def test_edge_weight_modes(rng):
    store = ParameterStore()
    store.add("query", rng.normal(size=(4, 2)))
    store.add("relation.0", rng.normal(size=(4, 2)))
    store.add("relation_linear.0.weight", rng.normal(size=(2, 8)))
    store.add("relation_linear.0.bias", rng.normal(size=8))
    emb = EdgeWeightModel("per-relation-embedding", store=store, num_relations=4)
    assert np.array_equal(emb.weights([1, 3], 2), store["relation.0"][[1, 3]])
    lin = EdgeWeightModel("linear-over-query", store=store, num_relations=4)
    flat = store["query"][2] @ store["relation_linear.0.weight"] + store["relation_linear.0.bias"]
    assert np.allclose(lin.weights([3], 2)[0], flat[6:8])
    const = EdgeWeightModel("constant", 1, num_relations=4)
    assert const.weights([0, 1, 2], 0).tolist() == [1, 1, 1]
    with pytest.raises(ValueError):
        EdgeWeightModel("rotation")
