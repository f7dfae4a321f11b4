"""Cut reached by the QAOA optimizer on the shipped graph for each depth and seed.

Usage: python3 scripts/qaoa_optimizer_table.py [--depths 1 2 3 4 5 6 7] [--seeds 0 1 2]
"""

import argparse
import csv
import sys

from qshap.models import OptimizerConfig, brute_force_maxcut, optimize_qaoa, shipped_graph
from qshap.simulator import bitstring


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="*", default=list(range(1, 8)))
    ap.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    args = ap.parse_args()

    graph = shipped_graph()
    best, _ = brute_force_maxcut(graph)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["r", "seed", "energy", "cut", "bitstring", "optimal", "evaluations"])
    for r in args.depths:
        for seed in args.seeds:
            res = optimize_qaoa(graph, r, OptimizerConfig(), seed)
            out.writerow([r, seed, f"{res.energy:.6f}", res.cut, bitstring(res.bitstring, graph.n_vertices),
                          int(res.cut == best), res.evaluations])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
