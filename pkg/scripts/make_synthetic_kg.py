"""Write a synthetic inductive kinship dataset (train graph plus a disjoint test graph)."""

import argparse

from pathkg.kg import load_split
from pathkg.synthetic import make_inductive_kinship


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="directory for train/valid/test; the test graph goes to <out>_ind")
    ap.add_argument("--families", type=int, default=12)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--observed", type=float, default=0.5, help="share of facts kept in the graph")
    args = ap.parse_args()
    base, ind = make_inductive_kinship(args.out, args.families, args.seed, args.observed)
    b = load_split(base, "inductive")
    print(f"wrote {base} and {ind}")
    print(f"train: {b.train_graph.num_entities} entities, {len(b.train)} facts, {b.num_relations} relations, "
          f"{len(b.valid)} valid queries")
    print(f"test graph: {b.test_graph.num_entities} entities, {b.test_graph.num_edges // 2} facts, "
          f"{len(b.test)} test queries")


if __name__ == "__main__":
    main()
