"""Train the shipped QNN on its toy data with COBYLA and freeze theta.

Usage: python scripts/train_qnn.py [--restarts 8] [--write]
"""

import argparse
import json
from importlib import resources

import numpy as np
from scipy.optimize import minimize

from qshap.models import load_data, make_dataset, qnn_expected_value, qnn_game
from qshap.rng import derive_seed, make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--restarts", type=int, default=8)
    ap.add_argument("--maxiter", type=int, default=1000)
    ap.add_argument("--write", action="store_true", help="store the result in qshap/data/qnn.json")
    args = ap.parse_args()

    doc = load_data("qnn.json")
    rule = doc["data_rule"]
    data = make_dataset("qnn-toy", rule["seed"], rule["points"])
    game, _ = qnn_game()

    def loss(theta):
        return -qnn_expected_value(game, game.grand, data, theta)

    best = None
    for k in range(args.restarts):
        x0 = make_rng(derive_seed(rule["seed"], "qnn-train", k)).uniform(0, 2 * np.pi, 4)
        res = minimize(loss, x0, method="COBYLA", options={"maxiter": args.maxiter, "rhobeg": 0.5})
        print(f"restart {k}: expected accuracy {-res.fun:.4f}")
        if best is None or res.fun < best.fun:
            best = res
    theta = [round(float(t), 3) for t in best.x]
    print("theta", theta, "expected accuracy", -loss(np.array(theta)))
    if args.write:
        doc["theta"] = theta
        path = resources.files("qshap.data").joinpath("qnn.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
