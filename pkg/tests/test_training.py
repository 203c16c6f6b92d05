import numpy as np
import pytest

from pathkg.kg import Triplet, augment_inverse, build_csr, load_split
from pathkg.model import AStarModel, ModelConfig
from pathkg.nn.params import ParameterStore
from pathkg.synthetic import make_inductive_kinship
from pathkg.training import (
    KnownTriplets,
    RankingReport,
    TrainConfig,
    TrainingError,
    count_messages,
    evaluate,
    expected_random_mrr,
    fit,
    rank_of,
    sample_negatives,
    train_epoch,
)


@pytest.fixture(scope="module")
def kinship(tmp_path_factory):
    base, _ = make_inductive_kinship(tmp_path_factory.mktemp("kin") / "kin", num_families=3, seed=2)
    return load_split(base, "inductive")


def small_model(R2, **kw):
    return AStarModel(ModelConfig(width=8, hidden=8, num_steps=3, **kw), R2, seed=0)


def test_negatives_saturated_graph_accepts_after_cap(rng):
    facts = [Triplet(0, 0, x) for x in range(3)] + [Triplet(x, 0, 0) for x in range(3)]
    known = KnownTriplets(facts, 3, 1)
    negs = sample_negatives(Triplet(0, 0, 1), 3, 5, rng, known, side="tail")
    assert len(negs) == 5 and all(n.head == 0 for n in negs)


def test_negatives_two_entity_outcome_space(rng):
    known = KnownTriplets([Triplet(0, 0, 1)], 2, 1)
    for _ in range(20):
        (neg,) = sample_negatives(Triplet(0, 0, 1), 2, 1, rng, known)
        # tail corruption can only land on 0; head corruption only on 1
        assert neg in (Triplet(0, 0, 0), Triplet(1, 0, 1))
        assert not known.contains(*neg)


def test_negatives_deterministic_under_seed():
    a = sample_negatives(Triplet(0, 0, 1), 50, 8, np.random.default_rng(4))
    b = sample_negatives(Triplet(0, 0, 1), 50, 8, np.random.default_rng(4))
    assert a == b
    with pytest.raises(ValueError):
        sample_negatives(Triplet(0, 0, 1), 50, 0, np.random.default_rng(4))


def test_known_triplets_inverse_lookup():
    known = KnownTriplets([Triplet(0, 1, 2)], 3, 2)
    assert known.contains(0, 1, 2) and known.contains(2, 3, 0)
    assert not known.contains(2, 1, 0)
    assert known.answers(2, 3).tolist() == [0]


def test_rank_conventions():
    assert rank_of(np.array([0.1, 0.9, 0.2]), 1) == 1.0
    scores = np.full(5, 0.5)
    assert rank_of(scores, 0, np.array([3])) == 2.5
    assert rank_of(np.array([0.9, 0.5, 0.8]), 1, np.array([0, 1])) == 2.0


def test_report_monotone_hits():
    rep = RankingReport.from_ranks([1, 2.5, 4, 11, 30])
    assert rep.hits1 <= rep.hits3 <= rep.hits10 and 0 < rep.mrr <= 1
    assert count_messages([np.ones((2, 3)), np.full((1, 3), 4)]) == 2.0


def test_lr_zero_leaves_parameters(kinship):
    model = small_model(2 * kinship.num_relations, node_ratio=0.5)
    before = model.store.flat().copy()
    cfg = TrainConfig(batch_size=64, learning_rate=0.0, num_negatives=4)
    train_epoch(model, kinship.train_graph, kinship.train[:128], cfg, np.random.default_rng(0))
    assert np.array_equal(before, model.store.flat())


def test_single_triplet_memorised():
    facts = [Triplet(0, 0, 1), Triplet(1, 1, 2), Triplet(2, 0, 3), Triplet(3, 1, 0)]
    g = build_csr(augment_inverse(facts, 2), 4, 2)
    model = AStarModel(ModelConfig(width=8, hidden=16, num_steps=2), 4, seed=0)
    cfg = TrainConfig(batch_size=1, learning_rate=0.02, num_negatives=2)
    rng = np.random.default_rng(0)
    known = KnownTriplets(facts + [Triplet(0, 0, 2)], 4, 2)
    losses = [train_epoch(model, g, [Triplet(0, 0, 2)], cfg, rng, known).loss for _ in range(200)]
    assert np.mean(losses[-10:]) < 0.1


def test_epoch_is_deterministic(kinship):
    cfg = TrainConfig(batch_size=64, num_negatives=4)
    flats = []
    for _ in range(2):
        model = small_model(2 * kinship.num_relations, node_ratio=0.5)
        train_epoch(model, kinship.train_graph, kinship.train[:128], cfg, np.random.default_rng(7))
        flats.append(model.store.flat())
    assert flats[0].tobytes() == flats[1].tobytes()


def test_non_finite_loss_aborts(kinship):
    model = small_model(2 * kinship.num_relations)
    model.store["priority.f.1.bias"][:] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        train_epoch(model, kinship.train_graph, kinship.train[:8], TrainConfig(batch_size=8, num_negatives=2),
                    np.random.default_rng(0))


def test_head_direction_equals_inverse_tail_direction(kinship):
    model = small_model(2 * kinship.num_relations, node_ratio=0.5)
    g, R = kinship.train_graph, kinship.num_relations
    trips = kinship.valid[:20]
    inv = [Triplet(t, r + R, h) for h, r, t in trips]
    a = evaluate(model, trips, g, kinship.valid_filter, directions="head")
    b = evaluate(model, inv, g, kinship.valid_filter, directions="tail")
    assert sorted(a.ranks.tolist()) == sorted(b.ranks.tolist())


def test_filtering_never_hurts(kinship):
    model = small_model(2 * kinship.num_relations, node_ratio=0.5)
    g = kinship.train_graph
    flt = evaluate(model, kinship.valid, g, kinship.valid_filter, batch_size=16)
    raw = evaluate(model, kinship.valid, g, kinship.valid_filter, batch_size=16, filtered=False)
    assert (flt.ranks <= raw.ranks).all()


def test_random_model_near_chance(kinship):
    model = small_model(2 * kinship.num_relations)
    rep = evaluate(model, kinship.test, kinship.test_graph, kinship.test_filter)
    chance = expected_random_mrr(kinship.test_graph.num_entities)
    assert chance / 3 <= rep.mrr <= 3 * chance * 2  # filtered ranks sit slightly above chance


def test_fit_writes_checkpoints_and_improves(kinship, tmp_path):
    model = small_model(2 * kinship.num_relations, node_ratio=0.5)
    cfg = TrainConfig(batch_size=32, epochs=3, num_negatives=8, learning_rate=5e-3)
    res = fit(model, kinship, cfg, tmp_path)
    assert (tmp_path / "best.ckpt").is_file() and (tmp_path / "last.ckpt").is_file()
    assert res.epochs[-1].loss < res.epochs[0].loss
    _, extra = ParameterStore.load(tmp_path / "last.ckpt")
    assert extra["epoch"] == 2 and "rng" in extra
    best, _ = ParameterStore.load(tmp_path / "best.ckpt")
    assert best.flat().tobytes() == res.best_store.flat().tobytes()
