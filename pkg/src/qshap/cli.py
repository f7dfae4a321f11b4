"""Command-line runner for gate-attribution experiments.

``qshap run CONFIG`` executes a JSON experiment config and writes the
report, marginal distribution, pruning tables and a run record to the
configured output directory. The remaining subcommands expose the
estimators, the transpiler and the max-cut oracle directly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .circuit import CoalitionGame, circuit_from_config, circuit_to_config
from .errors import ConfigError, NumericError, QShapError, ResourceCapError, RoutingError
from .models import (
    Dataset,
    MaxCutGraph,
    OptimizerConfig,
    SplitData,
    brute_force_maxcut,
    load_data,
    make_dataset,
    optimize_qaoa,
    qaoa_game,
    qgan_game,
    qnn_game,
    qsvm_game,
    shipped_graph,
)
from .rng import derive_seed, make_rng
from .shapley import (
    ShapleyReport,
    ValueFunctionSpec,
    combine_runs,
    estimate,
    marginal_distribution,
    pareto_frontier,
    pool_multisets,
)
from .simulator import bitstring
from .transpiler import best_of_trials, load_target
from .value_functions import make_value_function

EXPERIMENTS = ("qsvm", "qnn", "qgan", "transpile", "qaoa", "custom-game")
DEFAULT_VALUE_FUNCTION = {
    "qsvm": "accuracy_qsvm",
    "qnn": "accuracy_qnn",
    "qgan": "hellinger",
    "transpile": "exec_efficiency",
    "qaoa": "energy",
    "custom-game": "table",
}


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class EstimatorConfig:
    alpha: float = 1.0
    K: int = 1
    runs: int = 1
    seed: int = 0


@dataclass
class ExperimentConfig:
    experiment: str
    value_function: str
    vf_params: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    output: str = "results"
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def hash(self) -> str:
        """Digest of everything that determines coalition values."""
        doc = {"experiment": self.experiment, "value_function": self.value_function,
               "vf_params": self.vf_params, "model": self.model, "K": self.estimator.K}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _expect(doc, key, kind, path, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}: required field missing")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Validate an experiment document; errors name the offending field path."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    kind = _expect(doc, "experiment", str, "config", required=True)
    if kind not in EXPERIMENTS:
        raise ConfigError(f"config.experiment: unknown kind {kind!r}, expected one of {EXPERIMENTS}")
    vf = _expect(doc, "value_function", dict, "config", default={})
    name = _expect(vf, "name", str, "config.value_function", default=DEFAULT_VALUE_FUNCTION[kind])
    params = _expect(vf, "params", dict, "config.value_function", default={})
    model = _expect(doc, "model", dict, "config", default={})
    est = _expect(doc, "estimator", dict, "config", default={})
    alpha = _expect(est, "alpha", float, "config.estimator", default=1.0)
    K = _expect(est, "K", int, "config.estimator", default=1)
    runs = _expect(est, "runs", int, "config.estimator", default=1)
    seed = _expect(est, "seed", int, "config.estimator", default=0)
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"config.estimator.alpha: {alpha} outside (0, 1]")
    if K < 1:
        raise ConfigError("config.estimator.K: must be at least 1")
    if runs < 1:
        raise ConfigError("config.estimator.runs: must be at least 1")
    output = _expect(doc, "output", str, "config", default="results")
    return ExperimentConfig(kind, name, params, model, EstimatorConfig(alpha, K, runs, seed), output, base_dir)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, path.parent)


# ---------------------------------------------------------------------------
# value cache


class JsonlCache:
    """Append-only log of ``{"mask": hex, "rep": int, "value": float}`` lines."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.data: dict[tuple[int, int], float] = {}
        self.new = 0
        if self.path.exists():
            for n, line in enumerate(self.path.read_text().splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    key = (int(entry["mask"], 16), int(entry["rep"]))
                    value = float(entry["value"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{self.path}:{n}: corrupt cache line") from exc
                self.data[key] = value
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def get(self, mask, rep):
        return self.data.get((mask, rep))

    def put(self, mask, rep, value):
        self.data[(mask, rep)] = value
        self._fh.write(json.dumps({"mask": hex(mask), "rep": rep, "value": value}) + "\n")
        self.new += 1

    def close(self):
        self._fh.close()

    def __len__(self):
        return len(self.data)


# ---------------------------------------------------------------------------
# experiment assembly


def _load_json(cfg: ExperimentConfig, ref):
    if isinstance(ref, dict):
        return ref
    path = cfg.resolve(ref)
    if not path.exists():
        raise ConfigError(f"referenced file {ref} not found")
    return json.loads(path.read_text())


def _qsvm_data(cfg: ExperimentConfig) -> SplitData:
    spec = cfg.model.get("dataset", {"kind": "havlicek-like", "seed": 0})
    if "train" in spec:
        train = Dataset.from_csv(cfg.resolve(spec["train"]).read_text(), "train")
        test = Dataset.from_csv(cfg.resolve(spec["test"]).read_text(), "test")
        return SplitData(train, test)
    sizes = tuple(spec.get("sizes", (40, 1000)))
    return make_dataset("havlicek-like", int(spec.get("seed", 0)), sizes, float(spec.get("gap", 0.3)))


def _active(cfg: ExperimentConfig, circuit, default=None):
    if "remaining" in cfg.model:
        rest = set(cfg.model["remaining"])
        return tuple(g for g in range(1, len(circuit) + 1) if g not in rest)
    if "active" in cfg.model:
        return tuple(cfg.model["active"])
    return default or tuple(range(1, len(circuit) + 1))


def _table_game(doc: dict, sigma: float = 0.0) -> tuple[int, ValueFunctionSpec]:
    try:
        n = int(doc["players"])
        values = np.asarray(doc["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("value table needs 'players' and 'values'") from exc
    if values.shape != (1 << n,):
        raise ConfigError(f"value table for {n} players needs {1 << n} values, got {values.size}")
    if sigma > 0:
        return n, ValueFunctionSpec("table", lambda m, s: float(values[m] + sigma * make_rng(s).standard_normal()))
    return n, ValueFunctionSpec("table", lambda m, s: float(values[m]), deterministic=True)


def build_run(cfg: ExperimentConfig, run_seed: int):
    """Game and value function for one independent run."""
    kind, m, name = cfg.experiment, cfg.model, cfg.value_function
    context: dict = {}
    if kind == "qsvm":
        game = qsvm_game(int(m.get("r", 1)))
        context["data"] = _qsvm_data(cfg)
        params = dict(cfg.vf_params)
        if "C" in m:
            params.setdefault("C", m["C"])
    elif kind == "qnn":
        game, theta = qnn_game()
        rule = load_data("qnn.json")["data_rule"]
        context["data"] = make_dataset("qnn-toy", int(m.get("data_seed", rule["seed"])), rule["points"])
        context["theta"] = np.asarray(m.get("theta", theta), dtype=float)
        params = dict(cfg.vf_params)
    elif kind == "qgan":
        game, theta = qgan_game()
        context["theta"] = np.asarray(m.get("theta", theta), dtype=float)
        params = dict(cfg.vf_params)
    elif kind == "transpile":
        ref = m.get("circuit", "qft3")
        doc = load_data(f"{ref}.json") if ref in ("qft3",) else _load_json(cfg, ref)
        circuit = circuit_from_config(doc.get("circuit", doc))
        game = CoalitionGame(circuit, _active(cfg, circuit))
        params = dict(cfg.vf_params)
        target = m.get("target", params.pop("target", "oslo"))
        context["target"] = load_target(target if isinstance(target, (str, dict)) else str(target))
    elif kind == "qaoa":
        graph = MaxCutGraph.from_json(_load_json(cfg, m["graph"])) if "graph" in m else shipped_graph()
        r = int(m.get("r", 1))
        game = qaoa_game(graph, r)
        params = dict(cfg.vf_params)
        if name == "energy":
            opt = OptimizerConfig(**m.get("optimizer", {}))
            result = optimize_qaoa(graph, r, opt, derive_seed(run_seed, "optimizer"))
            context["theta"] = result.theta
            context["qaoa"] = result
        else:
            # a distinct parameter sample per run
            params.setdefault("seed", int(derive_seed(run_seed, name) % (1 << 31)))
    elif kind == "custom-game":
        n, vf = _table_game(_load_json(cfg, m["table"]), float(m.get("sigma", 0.0)))
        return n, vf, context
    else:  # pragma: no cover - parse_config rejects this
        raise ConfigError(f"unknown experiment {kind}")
    return game, make_value_function(name, game, params, **context), context


def _gate_labels(game):
    if isinstance(game, int):
        return list(range(1, game + 1)), [f"v{i}" for i in range(1, game + 1)]
    return list(game.active), [game.circuit.gate(g).name for g in game.active]


# ---------------------------------------------------------------------------
# run


@dataclass
class RunRecord:
    config_hash: str
    seeds: list[int]
    wall_clock: float
    evaluations: int
    calls: int
    cached: int
    artifacts: dict


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run(cfg: ExperimentConfig, output: Path | None = None, threads: int | None = None) -> RunRecord:
    """Execute all runs of ``cfg`` and write the artifacts; returns the run record."""
    start = time.perf_counter()
    out = Path(output) if output is not None else cfg.resolve(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.hash()
    reports: list[ShapleyReport] = []
    seeds = []
    calls = 0
    cached = 0
    extras = []
    game = None
    for k in range(cfg.estimator.runs):
        run_seed = derive_seed(cfg.estimator.seed, "run", k)
        seeds.append(run_seed)
        game, vf, context = build_run(cfg, run_seed)
        cache = JsonlCache(out / "cache" / f"{digest}-{run_seed:016x}.jsonl")
        try:
            report = estimate(game, vf, cfg.estimator.alpha, cfg.estimator.K, run_seed, cache=cache, threads=threads)
        finally:
            cache.close()
        calls += cache.new
        cached = max(cached, len(cache))
        reports.append(report)
        if "qaoa" in context:
            res = context["qaoa"]
            extras.append({"run": k, "energy": res.energy, "cut": res.cut,
                           "bitstring": bitstring(res.bitstring, game.circuit.q),
                           "theta": [float(t) for t in res.theta], "converged": res.converged})
    combined = combine_runs(reports)
    gate_idx, gate_names = _gate_labels(game)
    payload = {"config_hash": digest, "experiment": cfg.experiment, "value_function": cfg.value_function,
               "runs": cfg.estimator.runs, **combined.to_json(gate_idx, gate_names)}
    if extras:
        payload["optimizer"] = extras
    artifacts = {}

    def write(name, text):
        (out / name).write_text(text)
        artifacts[name] = os.path.normpath(out / name)

    write("report.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")
    last = reports[-1]
    n_players = combined.n_players
    if last.draws is not None:
        dist = marginal_distribution(n_players, mode="sampled", report=last)
    else:
        dist = marginal_distribution(n_players, mode="exact", report=last)
    rows = [(i + 1, repr(d), repr(w)) for i, e in enumerate(dist.entries) for d, w in e]
    write("marginals.csv", _csv(rows, ["player", "delta", "weight"]))
    multisets = pool_multisets(last)
    write("wk.csv", _csv([(k, repr(float(v))) for k in sorted(multisets) for v in multisets[k]], ["k", "value"]))
    front = pareto_frontier(multisets)
    write("pareto.csv", _csv([(r["k"], repr(r["best"]), repr(r["frontier"]), int(r["on_frontier"])) for r in front],
                             ["k", "best", "frontier", "on_frontier"]))
    summary = [(i + 1, gate_idx[i], gate_names[i], repr(float(combined.phi[i])), _fmt(combined.std_runs[i]))
               for i in range(n_players)]
    write("summary.csv", _csv(summary, ["player", "gate_index", "gate_name", "mean", "std"]))
    record = RunRecord(digest, [int(s) for s in seeds], time.perf_counter() - start, combined.evaluations, calls,
                       cached, dict(artifacts))
    (out / "run_record.json").write_text(json.dumps(asdict(record), indent=1) + "\n")
    return record


def plotdata(report: dict) -> str:
    rows = []
    for p in report["players"]:
        rows.append((p["player"], p["gate_index"], p["gate_name"], _fmt(p["phi"]), _fmt(p["std_runs"]),
                     _fmt(p["std_dist"])))
    return _csv(rows, ["player", "gate_index", "gate_name", "phi", "std_runs", "std_dist"])


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qshap", description="Shapley values for gates of parameterized circuits")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--output", help="override the output directory")
    p.add_argument("--threads", type=int, help="worker threads (default: QSHAP_THREADS or all cores)")

    for name in ("exact", "estimate"):
        p = sub.add_parser(name, help=f"{name} Shapley values of a value table")
        p.add_argument("table", help='JSON {"players": N, "values": [2^N values indexed by mask]}')
        p.add_argument("--sigma", type=float, default=0.0, help="additive Gaussian noise")
        if name == "estimate":
            p.add_argument("--alpha", type=float, default=1.0)
            p.add_argument("--K", type=int, default=1)
            p.add_argument("--runs", type=int, default=1)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("transpile", help="best-of-trials transpilation penalty of a circuit")
    p.add_argument("circuit", help="circuit JSON file or 'qft3'")
    p.add_argument("--target", default="oslo")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--s1", type=float, default=-1.0)
    p.add_argument("--s2", type=float, default=-10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump", help="write the best transpiled circuit here")

    p = sub.add_parser("brute-force-maxcut", help="exact max cut of a graph")
    p.add_argument("graph", nargs="?", default="shipped", help="graph JSON file (default: shipped graph)")

    p = sub.add_parser("plotdata", help="CSV of phi and error bars from a report")
    p.add_argument("report")
    return ap


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = load_config(args.config)
        record = run(cfg, Path(args.output) if args.output else None, args.threads)
        print(json.dumps(asdict(record), indent=1))
        return 0
    if args.command in ("exact", "estimate"):
        n, vf = _table_game(_read_json(args.table), args.sigma)
        if args.command == "exact":
            if not vf.deterministic:
                raise ConfigError("exact mode needs sigma = 0")
            report = estimate(n, vf, 1.0, 1, 0)
        else:
            reports = [estimate(n, vf, args.alpha, args.K, derive_seed(args.seed, "run", k))
                       for k in range(args.runs)]
            report = combine_runs(reports)
        print(json.dumps(report.to_json(), indent=1))
        return 0
    if args.command == "transpile":
        doc = load_data("qft3.json") if args.circuit == "qft3" else _read_json(args.circuit)
        circuit = circuit_from_config(doc.get("circuit", doc))
        score, tc = best_of_trials(circuit, load_target(args.target), args.s1, args.s2, args.trials, args.seed)
        print(json.dumps({"penalty": score, "n1": tc.n1, "n2": tc.n2, "initial_layout": list(tc.initial_layout)}))
        if args.dump:
            Path(args.dump).write_text(json.dumps(circuit_to_config(tc.to_circuit()), indent=1) + "\n")
        return 0
    if args.command == "brute-force-maxcut":
        graph = shipped_graph() if args.graph == "shipped" else MaxCutGraph.from_json(_read_json(args.graph))
        best, opt = brute_force_maxcut(graph)
        print(json.dumps({"max_cut": best, "optimal": [bitstring(o, graph.n_vertices) for o in opt]}))
        return 0
    if args.command == "plotdata":
        sys.stdout.write(plotdata(_read_json(args.report)))
        return 0
    raise ConfigError(f"unknown command {args.command}")  # pragma: no cover


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, RoutingError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except QShapError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
