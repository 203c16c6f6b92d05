"""Rule-generated kinship graphs for small learning experiments.

Families are grown generation by generation. ``parent_of`` and ``spouse_of``
are always observed; relations derivable from them by short rules
(grandparent, sibling, uncle/aunt, cousin, parent-in-law) are partly
observed and partly held out as queries, so answering them needs multi-hop
paths.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

BASE = ("parent_of", "spouse_of")
DERIVED = ("sibling_of", "grandparent_of", "uncle_of", "cousin_of", "parent_in_law_of")


def family_facts(num_families: int, rng: np.random.Generator, prefix: str,
                 generations: int = 3) -> set[tuple[str, str, str]]:
    facts: set[tuple[str, str, str]] = set()
    counter = 0

    def person():
        nonlocal counter
        counter += 1
        return f"{prefix}{counter}"

    parents: dict[str, list[str]] = {}
    spouse: dict[str, str] = {}
    for _ in range(num_families):
        couples = [(person(), person())]
        for _ in range(generations):
            nxt = []
            for a, b in couples:
                spouse[a], spouse[b] = b, a
                for _ in range(int(rng.integers(1, 4))):
                    c = person()
                    parents[c] = [a, b]
                    if rng.random() < 0.7:
                        nxt.append((c, person()))
            couples = nxt
        for a, b in couples:
            spouse[a], spouse[b] = b, a

    children: dict[str, list[str]] = {}
    for c, ps in parents.items():
        for p in ps:
            children.setdefault(p, []).append(c)
            facts.add((p, "parent_of", c))
    for a, b in spouse.items():
        facts.add((a, "spouse_of", b))

    def siblings(x):
        ps = parents.get(x)
        return [] if not ps else [s for s in children[ps[0]] if s != x]

    for x in list(parents) + list(spouse):
        for s in siblings(x):
            facts.add((x, "sibling_of", s))
        for c in children.get(x, []):
            for g in children.get(c, []):
                facts.add((x, "grandparent_of", g))
        for s in siblings(x):
            for n in children.get(s, []):
                facts.add((x, "uncle_of", n))
                if x in spouse:
                    facts.add((spouse[x], "uncle_of", n))
                for own in children.get(x, []):
                    facts.add((own, "cousin_of", n))
        if x in spouse:
            for p in parents.get(spouse[x], []):
                facts.add((p, "parent_in_law_of", x))
    return facts


def split_facts(facts: set[tuple[str, str, str]], rng: np.random.Generator, observed: float = 0.5,
                query_fraction: float = 1.0):
    """Base facts plus a share of derived facts form the graph; the rest are queries."""
    ordered = sorted(facts)
    graph, held = [], []
    for f in ordered:
        if f[1] in BASE or rng.random() < observed:
            graph.append(f)
        elif rng.random() < query_fraction:
            held.append(f)
    return graph, held


def write_tsv(path: Path, triplets):
    with open(path, "w", encoding="utf-8") as fout:
        for h, r, t in triplets:
            fout.write(f"{h}\t{r}\t{t}\n")


def make_inductive_kinship(directory: str | Path, num_families: int = 12, seed: int = 0,
                           observed: float = 0.5) -> tuple[Path, Path]:
    """Write ``<dir>/{train,valid,test}.txt`` and ``<dir>_ind/{train,valid,test}.txt``.

    The two directories use disjoint entities and the same relations.
    """
    rng = np.random.default_rng(seed)
    base = Path(directory)
    ind = base.with_name(base.name + "_ind")
    for d in (base, ind):
        d.mkdir(parents=True, exist_ok=True)
    train_graph, train_held = split_facts(family_facts(num_families, rng, "p"), rng, observed)
    ind_graph, ind_held = split_facts(family_facts(num_families, rng, "q"), rng, observed)
    rng.shuffle(train_held)
    rng.shuffle(ind_held)
    half = len(train_held) // 2
    write_tsv(base / "train.txt", train_graph)
    write_tsv(base / "valid.txt", train_held[:half])
    write_tsv(base / "test.txt", train_held[half:])
    mid = len(ind_held) // 2
    write_tsv(ind / "train.txt", ind_graph)
    write_tsv(ind / "valid.txt", ind_held[:mid])
    write_tsv(ind / "test.txt", ind_held[mid:])
    return base, ind
