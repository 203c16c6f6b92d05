import numpy as np
import pytest

from pathkg.nn import ParameterStore, Tape, Tensor, adam_step, bce_loss, grad_check, no_grad, tape_gradients
from pathkg.nn import tape as T
from pathkg.nn.tape import ShapeError


def grads_of(fn, *arrays):
    leaves = [Tensor(np.array(a, float), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
    tape.backward(out)
    return out, [leaf.grad for leaf in leaves]


def test_relu_backward_at_negative():
    _, (g,) = grads_of(lambda x: T.sum(T.relu(x)), [-1.0])
    assert g.tolist() == [0.0]


def test_segment_sum_example():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        out = T.segment_sum(x, [0, 0, 1], 2)
    assert out.value.tolist() == [3.0, 3.0]
    tape.backward(out, seed=np.array([5.0, 7.0]))
    assert x.grad.tolist() == [5.0, 5.0, 7.0]


def test_segment_max_routes_to_argmax():
    _, (g,) = grads_of(lambda x: T.sum(T.segment_max(x, [0, 0, 1, 1], 2)), [1.0, 4.0, 4.0, 2.0])
    assert g.tolist() == [0.0, 1.0, 1.0, 0.0]


def test_gather_scatters():
    _, (g,) = grads_of(lambda x: T.sum(T.gather(x, [0, 2, 0])), [1.0, 2.0, 3.0])
    assert g.tolist() == [2.0, 0.0, 1.0]


def test_shape_mismatch_at_record_time():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        T.segment_sum(Tensor(np.ones(3)), [0, 1], 2)


@pytest.mark.parametrize("op", ["add", "mul", "matmul", "concat", "relu", "sigmoid", "scalar_mul",
                                "segment_sum", "segment_max", "gather", "sqrt", "log", "index_add"])
def test_isolated_op_gradients(op, rng):
    store = ParameterStore()
    store.add("a", rng.uniform(0.5, 2.0, size=(4, 3)))
    store.add("b", rng.normal(size=(4, 3)))
    store.add("w", rng.normal(size=(3, 2)))
    seg = np.array([0, 2, 0, 1])
    c = rng.normal(size=(4, 3))

    def fn(s):
        a, b = s.leaf("a"), s.leaf("b")
        out = {
            "add": lambda: T.add(a, b),
            "mul": lambda: T.mul(a, b),
            "matmul": lambda: T.matmul(b, s.leaf("w")),
            "concat": lambda: T.concat([a, b], axis=1),
            "relu": lambda: T.relu(b),
            "sigmoid": lambda: T.sigmoid(b),
            "scalar_mul": lambda: T.scalar_mul(b, -2.5),
            "segment_sum": lambda: T.segment_sum(b, seg, 3),
            "segment_max": lambda: T.segment_max(b, seg, 3),
            "gather": lambda: T.gather(b, [3, 1, 3]),
            "sqrt": lambda: T.sqrt(a),
            "log": lambda: T.log(a),
            "index_add": lambda: T.index_add(a, [3, 0], T.gather(b, [1, 2])),
        }[op]()
        weights = np.linspace(-1, 1, out.value.size).reshape(out.shape)
        return T.sum(out * weights)

    assert grad_check(fn, store) < 1e-5


def test_message_step_micro_instance(rng):
    # 3 nodes, 2 edges 0->1 and 1->2, width 2, messages weighted by head priority
    store = ParameterStore()
    store.add("h", rng.normal(size=(3, 2)))
    store.add("w", rng.normal(size=(2, 2)))
    store.add("s", rng.uniform(0.1, 0.9, size=3))
    src, dst, rel = np.array([0, 1]), np.array([1, 2]), np.array([0, 1])

    def fn(s):
        msg = T.gather(s.leaf("h"), src) * T.gather(s.leaf("w"), rel) * T.reshape(T.gather(s.leaf("s"), src), (-1, 1))
        return T.sum(T.sigmoid(T.segment_sum(msg, dst, 3)))

    assert grad_check(fn, store) < 1e-4


def test_grad_check_quadratic_and_chain(rng):
    store = ParameterStore()
    store.add("x", rng.normal(size=5))
    assert grad_check(lambda s: T.sum(s.leaf("x") * s.leaf("x")), store) < 1e-8
    store.add("w", rng.normal(size=(5, 3)))
    assert grad_check(lambda s: T.sum(T.sigmoid(T.reshape(s.leaf("x"), (1, 5)) @ s.leaf("w"))), store) < 1e-5


def test_grad_check_random_probes(rng):
    store = ParameterStore()
    store.add("x", rng.normal(size=50))
    assert grad_check(lambda s: T.sum(T.sigmoid(s.leaf("x"))), store, max_coords=10, num_probes=8) < 1e-6


def test_backward_linear_in_losses(rng):
    store = ParameterStore()
    store.add("x", rng.normal(size=(5, 2)))
    seg = np.array([0, 1, 1, 2, 0])

    def loss(s, a):
        y = T.segment_sum(s.leaf("x"), seg, 3)
        return T.add(T.scalar_mul(T.sum(y * y), a), T.sum(T.sigmoid(y)))

    def first(s):
        y = T.segment_sum(s.leaf("x"), seg, 3)
        return T.sum(y * y)

    g1 = tape_gradients(first, store)
    g2 = tape_gradients(lambda s: T.sum(T.sigmoid(T.segment_sum(s.leaf("x"), seg, 3))), store)
    both = tape_gradients(lambda s: loss(s, 0.3), store)
    assert np.allclose(both["x"], 0.3 * g1["x"] + g2["x"], atol=1e-14)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            T.sum(x * x)
    assert len(tape) == 0


def test_bce_examples():
    rep = bce_loss(np.array([0.5]), np.array([[0.5]]))
    assert abs(rep.total - 2 * np.log(2)) < 1e-12
    assert bce_loss(np.array([1 - 1e-12]), np.array([[1e-12]])).total < 1e-6
    # clamped at the boundary instead of inf
    assert np.isfinite(bce_loss(np.array([0.0]), np.array([[1.0]])).total)


def test_bce_matches_straight_line(rng):
    pos = rng.uniform(0.01, 0.99, size=4)
    neg = rng.uniform(0.01, 0.99, size=(4, 32))
    want = np.mean(-np.log(pos) - np.log(1 - neg).mean(axis=1))
    rep = bce_loss(pos, neg)
    assert abs(rep.total - want) < 1e-12
    assert abs(rep.total - rep.positive - rep.negative) < 1e-12


def test_bce_adversarial_weights(rng):
    pos = rng.uniform(0.01, 0.99, size=3)
    neg = rng.uniform(0.01, 0.99, size=(3, 5))
    z = 0.5 * np.log(neg / (1 - neg))
    w = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    want = np.mean(-np.log(pos) - (w * np.log(1 - neg)).sum(axis=1))
    assert abs(bce_loss(pos, neg, 0.5).total - want) < 1e-12


def test_bce_tape_gradient(rng):
    store = ParameterStore()
    store.add("p", rng.uniform(0.1, 0.9, size=3))
    store.add("n", rng.uniform(0.1, 0.9, size=(3, 4)))
    assert grad_check(lambda s: bce_loss(s.leaf("p"), s.leaf("n"))[0], store) < 1e-6


def test_adam_zero_gradient_keeps_params():
    store = ParameterStore()
    store.add("x", np.array([1.0, -2.0]))
    adam_step(store, 0.1)
    assert store["x"].tolist() == [1.0, -2.0]
    # primed moments decay geometrically under zero gradient
    store.moments["x"][0][:] = 1.0
    store.moments["x"][1][:] = 1.0
    adam_step(store, 0.0)
    assert store.moments["x"][0].tolist() == [0.9, 0.9]
    assert store.moments["x"][1].tolist() == [0.999, 0.999]


def test_adam_first_step():
    store = ParameterStore()
    store.add("x", np.zeros(1))
    store.grads["x"][:] = 1.0
    adam_step(store, 0.1)
    assert abs(store["x"][0] + 0.1 / (1 + 1e-8)) < 1e-12
    assert store.grads["x"][0] == 0.0


def test_adam_constant_gradient_step_tends_to_lr():
    store = ParameterStore()
    store.add("x", np.zeros(1))
    prev = 0.0
    for _ in range(100):
        store.grads["x"][:] = 3.0
        adam_step(store, 0.01)
        step = prev - store["x"][0]
        prev = store["x"][0]
    assert abs(step - 0.01) < 1e-6


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    store = ParameterStore()
    store.add("a", rng.normal(size=(3, 4)))
    store.add("b.c", rng.normal(size=7))
    store.grads["a"][:] = rng.normal(size=(3, 4))
    store.grads["b.c"][:] = 1.0
    adam_step(store, 0.1)
    store.meta["k"] = {"x": 1}
    store.save(tmp_path / "c.ckpt", {"epoch": 3})
    back, extra = ParameterStore.load(tmp_path / "c.ckpt")
    assert extra == {"epoch": 3} and back.meta == store.meta and back.step == 1
    for n in store:
        assert back[n].tobytes() == store[n].tobytes()
        for m1, m2 in zip(back.moments[n], store.moments[n]):
            assert m1.tobytes() == m2.tobytes()
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        ParameterStore.load(tmp_path / "bad")


def test_index_add():
    _, (gb, gr) = grads_of(lambda b, r: T.sum(T.index_add(b, np.array([2, 0]), r) * np.arange(6.0).reshape(3, 2)),
                           np.zeros((3, 2)), np.ones((2, 2)))
    assert gr.tolist() == [[4.0, 5.0], [0.0, 1.0]]
    assert gb.tolist() == [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]
