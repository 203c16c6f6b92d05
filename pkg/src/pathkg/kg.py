"""Knowledge graph loading, inverse augmentation and CSR indexing."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class TsvParseError(ValueError):
    pass


class VocabularyError(KeyError):
    pass


class Triplet(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocabulary:
    """String <-> id map; ids are handed out in first-appearance order."""

    def __init__(self, names: Iterable[str] = (), frozen: bool = False):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.frozen = False
        for name in names:
            self.add(name)
        self.frozen = frozen

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def add(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is not None:
            return idx
        if self.frozen:
            raise VocabularyError(name)
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    def copy(self, frozen: bool | None = None) -> "Vocabulary":
        return Vocabulary(self.names, self.frozen if frozen is None else frozen)


def load_tsv(
    path: str | Path,
    entities: Vocabulary | None = None,
    relations: Vocabulary | None = None,
) -> tuple[list[Triplet], Vocabulary, Vocabulary]:
    """Read ``head<TAB>relation<TAB>tail`` lines into id triplets.

    Vocabularies passed in are extended in place unless frozen, in which case
    an unseen name raises :class:`VocabularyError` naming the line.
    """
    entities = Vocabulary() if entities is None else entities
    relations = Vocabulary() if relations is None else relations
    triplets = []
    with open(path, encoding="utf-8") as fin:
        for lineno, line in enumerate(fin, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise TsvParseError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            h, r, t = cols
            try:
                triplets.append(Triplet(entities.add(h), relations.add(r), entities.add(t)))
            except VocabularyError as e:
                raise VocabularyError(f"{path}:{lineno}: unknown name {e.args[0]!r} under frozen vocabulary") from None
    return triplets, entities, relations


def augment_inverse(triplets: Sequence[Triplet], num_relations: int) -> list[Triplet]:
    """Return the originals followed by their flipped copies ``(y, r + R, x)``."""
    for h, r, t in triplets:
        if not 0 <= r < num_relations:
            raise ValueError(f"relation id {r} outside [0, {num_relations})")
    out = [Triplet(*t) for t in triplets]
    out += [Triplet(t, r + num_relations, h) for h, r, t in triplets]
    return out


def inverse_relation(r: int, num_relations: int) -> int:
    return r + num_relations if r < num_relations else r - num_relations


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable CSR multigraph over an inverse-augmented triplet list.

    ``heads``, ``relations`` and ``tails`` are sorted by head (stable w.r.t.
    input order); edge ``i`` is the triplet at position ``i`` of those arrays.
    """

    num_entities: int
    num_base_relations: int
    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    head_offsets: np.ndarray
    degrees: np.ndarray
    # position of each edge's inverse partner, -1 when absent
    inverse_edge: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.heads)

    @property
    def num_relations(self) -> int:
        return 2 * self.num_base_relations

    def out_edges(self, node: int) -> np.ndarray:
        return np.arange(self.head_offsets[node], self.head_offsets[node + 1])

    def edge(self, i: int) -> Triplet:
        return Triplet(int(self.heads[i]), int(self.relations[i]), int(self.tails[i]))

    def triplets(self) -> list[Triplet]:
        return [self.edge(i) for i in range(self.num_edges)]

    def edge_ids(self) -> dict[Triplet, list[int]]:
        index: dict[Triplet, list[int]] = {}
        for i in range(self.num_edges):
            index.setdefault(self.edge(i), []).append(i)
        return index


def build_csr(triplets: Sequence[Triplet], num_entities: int, num_base_relations: int) -> KnowledgeGraph:
    """Index an (already augmented) triplet list. Parallel edges are kept."""
    arr = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    h, r, t = arr[:, 0], arr[:, 1], arr[:, 2]
    if len(arr) and (h.min() < 0 or t.min() < 0 or max(h.max(), t.max()) >= num_entities):
        raise ValueError(f"entity id outside [0, {num_entities})")
    if len(arr) and (r.min() < 0 or r.max() >= 2 * num_base_relations):
        raise ValueError(f"relation id outside [0, {2 * num_base_relations})")
    order = np.argsort(h, kind="stable")
    h, r, t = h[order], r[order], t[order]
    degrees = np.bincount(h, minlength=num_entities).astype(np.int64)
    offsets = np.zeros(num_entities + 1, dtype=np.int64)
    np.cumsum(degrees, out=offsets[1:])

    # pair every edge with one inverse partner; duplicates pair up in order
    pending: dict[tuple[int, int, int], list[int]] = {}
    inverse = np.full(len(h), -1, dtype=np.int64)
    R = num_base_relations
    for i in range(len(h)):
        key = (int(t[i]), int(r[i]) + R if r[i] < R else int(r[i]) - R, int(h[i]))
        bucket = pending.get(key)
        if bucket:
            j = bucket.pop()
            inverse[i], inverse[j] = j, i
        else:
            pending.setdefault((int(h[i]), int(r[i]), int(t[i])), []).append(i)
    for arr_ in (h, r, t, offsets, degrees, inverse):
        arr_.setflags(write=False)
    return KnowledgeGraph(num_entities, num_base_relations, h, r, t, offsets, degrees, inverse)


def graph_from_facts(facts: Sequence[Triplet], num_entities: int, num_base_relations: int) -> KnowledgeGraph:
    return build_csr(augment_inverse(facts, num_base_relations), num_entities, num_base_relations)


def mask_query_edges(graph: KnowledgeGraph, batch: Iterable[Triplet]) -> np.ndarray:
    """Visibility mask hiding each batch triplet and its inverse.

    Returns a boolean array over edges, True = visible. Every parallel copy of
    a masked triplet is hidden.
    """
    visible = np.ones(graph.num_edges, dtype=bool)
    batch = list(batch)
    if not batch:
        return visible
    R = graph.num_base_relations
    # encode triplets as scalars so the scan is one vectorised isin
    V, NR = graph.num_entities, graph.num_relations

    def code(h, r, t):
        return (np.asarray(h, dtype=np.int64) * NR + r) * V + t

    b = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    hidden = np.concatenate([code(b[:, 0], b[:, 1], b[:, 2]), code(b[:, 2], b[:, 1] + R, b[:, 0])])
    visible[np.isin(code(graph.heads, graph.relations, graph.tails), hidden)] = False
    return visible


@dataclass
class Query:
    head: int
    relation: int
    positive_tails: frozenset[int]
    provenance: str = "train"

    def __post_init__(self):
        if self.provenance not in ("train", "valid", "test"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def group_queries(triplets: Iterable[Triplet], provenance: str) -> list[Query]:
    """Collapse triplets sharing ``(head, relation)`` into one query each."""
    answers: dict[tuple[int, int], set[int]] = {}
    for h, r, t in triplets:
        answers.setdefault((h, r), set()).add(t)
    return [Query(h, r, frozenset(ts), provenance) for (h, r), ts in answers.items()]


@dataclass
class SplitBundle:
    """Everything needed to train on a dataset directory and rank its splits.

    ``train_graph`` holds the facts visible while training and validating;
    ``test_graph`` the facts visible at test time (the same object in
    transductive mode). ``*_filter`` are the known-true triplets used by
    filtered ranking, expressed in the ids of the matching graph.
    """

    mode: str
    relations: Vocabulary
    train_entities: Vocabulary
    test_entities: Vocabulary
    train: list[Triplet]
    valid: list[Triplet]
    test: list[Triplet]
    train_facts: list[Triplet]
    test_facts: list[Triplet]
    train_graph: KnowledgeGraph
    test_graph: KnowledgeGraph
    valid_filter: set[Triplet]
    test_filter: set[Triplet]

    @property
    def num_relations(self) -> int:
        return len(self.relations)


INFERENCE_FILE = "inference.txt"


def load_split(directory: str | Path, mode: str = "transductive") -> SplitBundle:
    """Load ``train.txt``/``valid.txt``/``test.txt`` from a dataset directory.

    Inductive mode looks for the test-time fact graph either in
    ``inference.txt`` (test queries in ``test.txt``) or in a sibling
    ``<name>_ind`` directory whose ``train.txt`` holds the inference facts and
    whose ``test.txt`` holds the test queries. Test entities get a fresh
    vocabulary; relations are shared and frozen.
    """
    directory = Path(directory)
    if mode not in ("transductive", "inductive"):
        raise ValueError(f"unknown split mode {mode!r}")
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    for name in ("train.txt", "valid.txt", "test.txt"):
        if not (directory / name).is_file():
            raise FileNotFoundError(f"missing {directory / name}")

    ents, rels = Vocabulary(), Vocabulary()
    train, ents, rels = load_tsv(directory / "train.txt", ents, rels)
    if mode == "transductive":
        # valid/test must reuse the train entities and relations
        rels.freeze()
        ents.freeze()
        valid, ents, rels = load_tsv(directory / "valid.txt", ents, rels)
        test, ents, rels = load_tsv(directory / "test.txt", ents, rels)
        graph = graph_from_facts(train, len(ents), len(rels))
        known = set(train) | set(valid) | set(test)
        return SplitBundle(mode, rels, ents, ents, train, valid, test, train, train, graph, graph, known, known)

    valid, ents, rels = load_tsv(directory / "valid.txt", ents, rels)
    sibling = directory.with_name(directory.name + "_ind")
    if (directory / INFERENCE_FILE).is_file():
        fact_file, test_file = directory / INFERENCE_FILE, directory / "test.txt"
    elif (sibling / "train.txt").is_file():
        fact_file, test_file = sibling / "train.txt", sibling / "test.txt"
    else:
        raise FileNotFoundError(f"inductive split needs {directory / INFERENCE_FILE} or {sibling}/train.txt")
    rels.freeze()
    ents.freeze()
    test_ents = Vocabulary()
    test_facts, test_ents, _ = load_tsv(fact_file, test_ents, rels)
    test, test_ents, _ = load_tsv(test_file, test_ents, rels)
    test_ents.freeze()
    train_graph = graph_from_facts(train, len(ents), len(rels))
    test_graph = graph_from_facts(test_facts, len(test_ents), len(rels))
    valid_filter = set(train) | set(valid)
    test_filter = set(test_facts) | set(test)
    if sibling.is_dir() and (sibling / "valid.txt").is_file() and fact_file.parent == sibling:
        extra, _, _ = load_tsv(sibling / "valid.txt", test_ents.copy(frozen=False), rels)
        test_filter |= set(extra)
    return SplitBundle(mode, rels, ents, test_ents, train, valid, test, train, test_facts,
                       train_graph, test_graph, valid_filter, test_filter)
