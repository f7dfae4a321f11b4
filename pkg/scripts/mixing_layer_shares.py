"""Exact QAOA layer attributions for expressibility and entangling capability.

Prints phi per layer and the largest mixing-layer share max|phi_mix| / max|phi|.

Usage: python3 scripts/mixing_layer_shares.py [--depths 1 2 3] [--squared] [--seed 0]
"""

import argparse

import numpy as np

from qshap.models import qaoa_game, shipped_graph
from qshap.shapley import exact_shapley
from qshap.value_functions import make_value_function


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=int, nargs="*", default=[1, 2, 3])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--squared", action="store_true", help="use squared overlaps for expressibility")
    args = ap.parse_args()

    graph = shipped_graph()
    for name in ("expressibility", "entangling"):
        for r in args.depths:
            game = qaoa_game(graph, r)
            params = {"seed": args.seed}
            if name == "expressibility":
                params["squared_fidelity"] = args.squared
            phi = exact_shapley(game, make_value_function(name, game, params)).phi
            share = np.max(np.abs(phi[1::2])) / np.max(np.abs(phi))
            layers = " ".join(f"{'C' if i % 2 == 0 else 'M'}{i // 2 + 1}={v:+.4f}" for i, v in enumerate(phi))
            print(f"{name:15s} r={r} share={share:.3f}  {layers}", flush=True)


if __name__ == "__main__":
    main()
