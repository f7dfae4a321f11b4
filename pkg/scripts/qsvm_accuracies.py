"""Grand-coalition test accuracy of the quantum-kernel SVM for each feature-map depth.

Usage: python3 scripts/qsvm_accuracies.py [--seeds 0 1 2] [--C 1.0]
"""

import argparse

from qshap.models import make_dataset, qsvm_game, qsvm_value


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="*", default=[0])
    ap.add_argument("--C", type=float, default=1.0)
    args = ap.parse_args()

    for seed in args.seeds:
        data = make_dataset("havlicek-like", seed)
        accs = [qsvm_value(qsvm_game(r), qsvm_game(r).grand, data, args.C) for r in (1, 2, 3)]
        print(f"seed {seed}: " + "  ".join(f"r={r} {a:.3f}" for r, a in zip((1, 2, 3), accs)))


if __name__ == "__main__":
    main()
