"""Counting mass and messages versus node ratio on random graphs, PPR priority fixed."""

import argparse

import numpy as np

from pathkg.oracle import budget_profile, random_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--graphs", type=int, default=50)
    ap.add_argument("--nodes", type=int, default=40)
    ap.add_argument("--edges", type=int, default=160)
    ap.add_argument("--steps", type=int, default=4)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--ratios", default="0.01,0.05,0.1,0.25,0.5,0.75,1.0")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ratios = [float(x) for x in args.ratios.split(",")]
    rng = np.random.default_rng(args.seed)
    mass, msgs, monotone = [], [], 0
    while len(mass) < args.graphs:
        g = random_graph(rng, args.nodes, args.edges, min_nodes=args.nodes // 2)
        if g.num_edges == 0:
            continue
        m, e = budget_profile(g, int(rng.integers(g.num_entities)), ratios, args.steps, args.beta)
        full_m, full_e = max(m[-1], 1), e[-1]
        mass.append(np.array(m) / full_m)
        msgs.append(np.array(e) / full_e)
        monotone += m == sorted(m) and e == sorted(e)
    print("alpha  mass/full  messages/full")
    for i, a in enumerate(ratios):
        print(f"{a:5.2f}  {np.mean([x[i] for x in mass]):9.3f}  {np.mean([x[i] for x in msgs]):13.3f}")
    print(f"monotone profiles: {monotone}/{args.graphs}")


if __name__ == "__main__":
    main()
