"""Negative sampling, the training loop and filtered-ranking evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .kg import KnowledgeGraph, SplitBundle, Triplet, mask_query_edges
from .model import AStarModel
from .nn import Tape, adam_step, bce_loss
from .nn import tape as T
from .nn.params import ParameterStore

MAX_RESAMPLE = 100


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 5e-3
    epochs: int = 20
    num_negatives: int = 32
    adversarial_temperature: float | None = None
    eval_batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be at least 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ValueError("batch sizes must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class RankingReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    ranks: np.ndarray = field(repr=False)
    messages: float = 0.0

    def summary(self) -> dict:
        return {"mrr": self.mrr, "hits@1": self.hits1, "hits@3": self.hits3, "hits@10": self.hits10,
                "num_ranks": int(len(self.ranks)), "messages": self.messages}

    @classmethod
    def from_ranks(cls, ranks: Iterable[float], messages: float = 0.0) -> "RankingReport":
        r = np.asarray(list(ranks), np.float64)
        if len(r) == 0:
            return cls(0.0, 0.0, 0.0, 0.0, r, messages)
        return cls(float((1.0 / r).mean()), float((r <= 1).mean()), float((r <= 3).mean()),
                   float((r <= 10).mean()), r, messages)


@dataclass
class EpochReport:
    epoch: int
    loss: float
    positive: float
    negative: float
    grad_norm: float
    messages: float
    seconds: float
    batches: int

    def line(self) -> str:
        return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(self).items())


def count_messages(messages: Sequence[np.ndarray] | np.ndarray) -> float:
    """Mean edges propagated per step over every sample and step."""
    if isinstance(messages, np.ndarray):
        arrays = [messages]
    else:
        arrays = [np.asarray(m) for m in messages]
    arrays = [a.reshape(-1) for a in arrays if a.size]
    if not arrays:
        return 0.0
    return float(np.concatenate(arrays).mean())


class KnownTriplets:
    """Membership test over known facts in the inverse-augmented id space."""

    def __init__(self, triplets: Iterable[Triplet], num_entities: int, num_base_relations: int):
        self.V, self.R = num_entities, num_base_relations
        arr = np.asarray(list(triplets), np.int64).reshape(-1, 3)
        codes = np.concatenate([self._code(arr[:, 0], arr[:, 1], arr[:, 2]),
                                self._code(arr[:, 2], arr[:, 1] + self.R, arr[:, 0])])
        self.codes = np.unique(codes)
        self._answers: dict[tuple[int, int], np.ndarray] | None = None

    def _code(self, u, q, x):
        return (np.asarray(u, np.int64) * (2 * self.R) + q) * self.V + x

    def contains(self, u, q, x) -> np.ndarray:
        c = self._code(u, q, x)
        idx = np.searchsorted(self.codes, c)
        idx = np.minimum(idx, len(self.codes) - 1)
        return self.codes[idx] == c if len(self.codes) else np.zeros(np.shape(c), bool)

    def answers(self, u: int, q: int) -> np.ndarray:
        """Every ``x`` with ``(u, q, x)`` known (``q`` may be an inverse relation)."""
        if self._answers is None:
            uq, x = np.divmod(self.codes, self.V)
            cut = np.flatnonzero(np.diff(uq)) + 1
            groups = np.split(x, cut)
            keys = uq[np.r_[0, cut]] if len(uq) else []
            self._answers = {divmod(int(k), 2 * self.R): g for k, g in zip(keys, groups)}
        return self._answers.get((u, q), np.zeros(0, np.int64))


def _corrupt(u: np.ndarray, q: np.ndarray, n: int, num_entities: int, known: KnownTriplets | None,
             rng: np.random.Generator) -> np.ndarray:
    """``(len(u), n)`` answers ``x`` with ``(u, q, x)`` not known, resampled up to a cap."""
    out = rng.integers(num_entities, size=(len(u), n))
    if known is None:
        return out
    uu, qq = np.repeat(u, n).reshape(out.shape), np.repeat(q, n).reshape(out.shape)
    bad = known.contains(uu, qq, out)
    for _ in range(MAX_RESAMPLE):
        if not bad.any():
            break
        out[bad] = rng.integers(num_entities, size=int(bad.sum()))
        bad[bad] = known.contains(uu[bad], qq[bad], out[bad])
    return out


def sample_negatives(query: Triplet, num_entities: int, n: int, rng: np.random.Generator,
                     known: KnownTriplets | None = None, side: str | None = None) -> list[Triplet]:
    """Corrupt the head or the tail (fair coin per negative unless ``side`` fixes it).

    Corrupted triplets that are known facts are redrawn, at most 100 times
    each; after that the last draw is kept.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    h, r, t = query
    if side is None:
        heads_side = rng.random(n) < 0.5
    elif side in ("head", "tail"):
        heads_side = np.full(n, side == "head")
    else:
        raise ValueError(f"side must be 'head', 'tail' or None, got {side!r}")
    R = known.R if known is not None else 0
    u = np.where(heads_side, t, h)
    q = np.where(heads_side, r + R, r)
    x = np.empty(n, np.int64)
    for i in range(n):
        x[i] = _corrupt(u[i:i + 1], q[i:i + 1], 1, num_entities, known, rng)[0, 0]
    return [Triplet(int(xi), r, t) if hs else Triplet(h, r, int(xi)) for xi, hs in zip(x, heads_side)]


def train_epoch(model: AStarModel, graph: KnowledgeGraph, triplets: Sequence[Triplet], config: TrainConfig,
                rng: np.random.Generator, known: KnownTriplets | None = None, epoch: int = 0,
                log: Callable[[str], None] | None = None) -> EpochReport:
    """One pass over ``triplets`` in shuffled batches.

    Each positive picks a side by coin flip; a head-side positive ``(h, r, t)``
    becomes the query ``(t, r^-1, ?)`` with answer ``h``. The batch's own
    triplets (and inverses) are hidden from the graph while it trains.
    """
    start = time.perf_counter()
    R = graph.num_base_relations
    data = np.asarray(triplets, np.int64).reshape(-1, 3)
    order = rng.permutation(len(data))
    totals = np.zeros(4)
    messages = []
    batches = 0
    store = model.store
    for lo in range(0, len(order), config.batch_size):
        batch = data[order[lo: lo + config.batch_size]]
        B = len(batch)
        head_side = rng.random(B) < 0.5
        u = np.where(head_side, batch[:, 2], batch[:, 0])
        q = np.where(head_side, batch[:, 1] + R, batch[:, 1])
        ans = np.where(head_side, batch[:, 0], batch[:, 2])
        neg = _corrupt(u, q, config.num_negatives, graph.num_entities, known, rng)
        mask = mask_query_edges(graph, [Triplet(*map(int, row)) for row in batch])
        with Tape() as tape:
            out = model.forward(graph, u, q, mask, record=False)
            pos = out.scores(np.arange(B), ans)
            negs = T.reshape(out.scores(np.repeat(np.arange(B), config.num_negatives), neg.ravel()),
                             (B, config.num_negatives))
            loss, report = bce_loss(pos, negs, config.adversarial_temperature)
        if not np.isfinite(report.total):
            raise TrainingError(f"non-finite loss {report.total} at epoch {epoch} batch {batches}: "
                                f"pos range [{pos.value.min():.3g}, {pos.value.max():.3g}]")
        tape.backward(loss)
        store.collect_grads(tape)
        gnorm = store.grad_norm()
        if not np.isfinite(gnorm):
            raise TrainingError(f"non-finite gradient at epoch {epoch} batch {batches}")
        adam_step(store, config.learning_rate)
        totals += (report.total * B, report.positive * B, report.negative * B, gnorm)
        messages.append(out.messages)
        batches += 1
        if log is not None:
            log(f"epoch={epoch} batch={batches} loss={report.total:.6g} grad_norm={gnorm:.6g}")
    n = max(len(data), 1)
    return EpochReport(epoch, totals[0] / n, totals[1] / n, totals[2] / n, totals[3] / max(batches, 1),
                       count_messages(messages), time.perf_counter() - start, batches)


def rank_of(scores: np.ndarray, answer: int, filtered: np.ndarray | None = None) -> float:
    """Rank of ``answer``; other known-true entities are removed, ties take the mean rank."""
    scores = np.asarray(scores, np.float64).copy()
    target = scores[answer]
    if filtered is not None and len(filtered):
        scores[filtered] = -np.inf
    scores[answer] = target
    higher = int((scores > target).sum())
    tied = int((scores == target).sum()) - 1
    return 1.0 + higher + tied / 2.0


def evaluate(model: AStarModel, triplets: Sequence[Triplet], graph: KnowledgeGraph,
             filter_set: Iterable[Triplet] | KnownTriplets | None, batch_size: int = 32,
             directions: str = "both", filtered: bool = True) -> RankingReport:
    """Filtered MRR and Hits@K over tail and head predictions.

    Queries sharing ``(u, q)`` are propagated once; every answer of that query
    is ranked against all entities with the other known answers removed.
    """
    R, V = graph.num_base_relations, graph.num_entities
    if filter_set is None or isinstance(filter_set, KnownTriplets):
        known = filter_set
    else:
        known = KnownTriplets(filter_set, V, R)
    data = np.asarray(triplets, np.int64).reshape(-1, 3)
    queries: dict[tuple[int, int], list[int]] = {}
    if directions in ("both", "tail"):
        for h, r, t in data:
            queries.setdefault((int(h), int(r)), []).append(int(t))
    if directions in ("both", "head"):
        for h, r, t in data:
            queries.setdefault((int(t), int(r) + R), []).append(int(h))
    keys = list(queries)
    ranks, messages = [], []
    for lo in range(0, len(keys), batch_size):
        chunk = keys[lo: lo + batch_size]
        u = np.array([k[0] for k in chunk], np.int64)
        q = np.array([k[1] for k in chunk], np.int64)
        with T.no_grad():
            out = model.forward(graph, u, q, record=False)
        scores = out.dense_scores(len(chunk))
        messages.append(out.messages)
        for i, key in enumerate(chunk):
            flt = known.answers(*key) if (filtered and known is not None) else None
            for a in queries[key]:
                ranks.append(rank_of(scores[i], a, flt))
    return RankingReport.from_ranks(ranks, count_messages(messages))


def expected_random_mrr(num_entities: int) -> float:
    """``E[1/rank]`` for a uniformly random rank in ``1..|V|``."""
    return float(np.sum(1.0 / np.arange(1, num_entities + 1)) / num_entities)


@dataclass
class FitResult:
    epochs: list[EpochReport]
    valid: list[RankingReport]
    best_epoch: int
    best_store: ParameterStore


def fit(model: AStarModel, bundle: SplitBundle, config: TrainConfig, out_dir: str | Path | None = None,
        log: Callable[[str], None] | None = None, start_epoch: int = 0,
        rng: np.random.Generator | None = None, best_mrr: float = -1.0,
        validate: bool = True) -> FitResult:
    """Train for ``config.epochs``, validating each epoch and keeping the best parameters.

    With ``out_dir`` the last and best checkpoints are written every epoch;
    the last one carries the RNG state so training can resume exactly.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    graph = bundle.train_graph
    known = KnownTriplets(bundle.train, graph.num_entities, graph.num_base_relations)
    valid_known = KnownTriplets(bundle.valid_filter, graph.num_entities, graph.num_base_relations)
    out = Path(out_dir) if out_dir is not None else None
    epochs, valids = [], []
    best_epoch, best_store = start_epoch - 1, model.store.copy()
    for epoch in range(start_epoch, config.epochs):
        rep = train_epoch(model, graph, bundle.train, config, rng, known, epoch)
        epochs.append(rep)
        if log:
            log(rep.line())
        if validate and bundle.valid:
            v = evaluate(model, bundle.valid, graph, valid_known, config.eval_batch_size)
            valids.append(v)
            if log:
                log(f"epoch={epoch} split=valid " + " ".join(f"{k}={x:.6g}" for k, x in v.summary().items()))
            score = v.mrr
        else:
            score = -rep.loss
        if score > best_mrr:
            best_mrr, best_epoch, best_store = score, epoch, model.store.copy()
            if out is not None:
                best_store.save(out / "best.ckpt", {"epoch": epoch, "valid_mrr": score}, optimizer=False)
        if out is not None:
            model.store.save(out / "last.ckpt", {"epoch": epoch, "best_epoch": best_epoch, "best_score": best_mrr,
                                                 "rng": json.loads(json.dumps(rng.bit_generator.state))})
    return FitResult(epochs, valids, best_epoch, best_store)
