"""Run every experiment config in configs/ and collect a one-line summary per run.

Usage: python3 scripts/run_all.py [--only qsvm qaoa_r1] [--threads 4]
"""

import argparse
import json
import sys
import time
from pathlib import Path

from qshap.cli import load_config, run

ROOT = Path(__file__).resolve().parents[1]
SKIP = {"example_table", "target_line3"}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", nargs="*", help="config name prefixes to run")
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()

    paths = [p for p in sorted((ROOT / "configs").glob("*.json")) if p.stem not in SKIP]
    if args.only:
        paths = [p for p in paths if any(p.stem.startswith(o) for o in args.only)]
    for path in paths:
        cfg = load_config(path)
        t0 = time.perf_counter()
        rec = run(cfg, threads=args.threads)
        report = json.loads(Path(rec.artifacts["report.json"]).read_text())
        phi = " ".join(f"{p['phi']:+.4f}" for p in report["players"])
        print(f"{path.stem:28s} {time.perf_counter() - t0:7.1f}s evals={rec.evaluations:<8d} phi=[{phi}]")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
