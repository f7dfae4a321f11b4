"""Search for a 7-vertex, 10-edge graph with a unique max cut of 9 and write it as JSON.

Usage: python3 scripts/freeze_graph.py [--seed 0] [--out graph.json]
"""

import argparse
import json

from qshap.models import brute_force_maxcut, find_unique_maxcut_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    graph = find_unique_maxcut_graph(seed=args.seed)
    best, opt = brute_force_maxcut(graph)
    text = json.dumps(graph.to_json())
    print(text, f"# max cut {best}, optimal masks {opt}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    main()
