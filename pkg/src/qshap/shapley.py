"""Shapley values of (possibly uncertain) coalition value functions.

Three routes are provided:

* :func:`exact_shapley` enumerates all ``2**N`` coalitions of a
  deterministic value function;
* :func:`estimate_full` samples every coalition ``K`` times and averages
  the per-realization Shapley values;
* :func:`estimate_sampled` draws ``n`` coalitions per player from the
  Shapley weight distribution and pools all realizations per coalition
  across players before differencing.

A value function sees coalitions as bitmasks (bit ``i - 1`` is player
``i``) and receives a per-job seed derived from ``(seed, mask, rep)``;
results therefore do not depend on evaluation order or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol

import numpy as np

from .errors import ConfigError, NumericError, ResourceCapError
from .rng import derive_seed, make_rng

DEFAULT_CAP = 24
MEMORY_LIMIT_BYTES = 2 << 30


@dataclass(frozen=True)
class ValueFunctionSpec:
    name: str
    evaluator: Callable[[int, int], float]
    deterministic: bool = False

    def __call__(self, mask: int, seed: int = 0) -> float:
        return float(self.evaluator(mask, seed))


class ValueCache(Protocol):
    def get(self, mask: int, rep: int) -> float | None: ...

    def put(self, mask: int, rep: int, value: float) -> None: ...


class MemoryCache:
    def __init__(self):
        self.data: dict[tuple[int, int], float] = {}

    def get(self, mask, rep):
        return self.data.get((mask, rep))

    def put(self, mask, rep, value):
        self.data[(mask, rep)] = value

    def __len__(self):
        return len(self.data)


@dataclass
class ShapleyReport:
    """Estimated Shapley values plus the sampling metadata behind them.

    ``pool`` maps a coalition mask to every realization drawn for it;
    ``draws`` holds, per player, the sampled ``(mask, delta)`` pairs of the
    subsampling estimator.
    """

    method: str
    n_players: int
    phi: np.ndarray
    K: int = 1
    n: int | None = None
    alpha: float = 1.0
    seeds: list[int] = field(default_factory=list)
    evaluations: int = 0
    calls: int = 0
    std_runs: np.ndarray | None = None
    std_dist: np.ndarray | None = None
    phi_runs: np.ndarray | None = None
    pool: dict[int, list[float]] = field(default_factory=dict, repr=False)
    draws: list[list[tuple[int, float]]] | None = field(default=None, repr=False)

    def to_json(self, gate_indices=None, gate_names=None) -> dict:
        players = []
        for i in range(self.n_players):
            players.append({
                "player": i + 1,
                "gate_index": None if gate_indices is None else int(gate_indices[i]),
                "gate_name": None if gate_names is None else gate_names[i],
                "phi": float(self.phi[i]),
                "std_runs": None if self.std_runs is None else float(self.std_runs[i]),
                "std_dist": None if self.std_dist is None else float(self.std_dist[i]),
            })
        out = {
            "method": self.method,
            "K": self.K,
            "n": self.n,
            "alpha": self.alpha,
            "seeds": [int(s) for s in self.seeds],
            "evaluations": self.evaluations,
            "players": players,
        }
        if self.phi_runs is not None:
            out["phi_runs"] = [[float(v) for v in row] for row in self.phi_runs]
        return out


# ---------------------------------------------------------------------------
# weights and sizes


def weight(m: int, N: int) -> float:
    """Shapley weight m!(N-m-1)!/N! of a coalition of size ``m`` that excludes one player."""
    if N < 1 or not 0 <= m <= N - 1:
        raise ConfigError(f"coalition size {m} out of range for {N} players")
    return 1.0 / (N * math.comb(N - 1, m))


def alpha_to_n(alpha: float, N: int) -> int:
    """Number of sampled coalitions per player, ceil(alpha * 2**(N-1))."""
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"sampling fraction {alpha} outside (0, 1]")
    # exact rational arithmetic avoids ceil of e.g. 9.000000000000002
    from fractions import Fraction

    return math.ceil(Fraction(str(alpha)) * 2 ** (N - 1))


def _n_players(game) -> int:
    return game if isinstance(game, int) else game.n_players


def _popcounts(N: int) -> np.ndarray:
    masks = np.arange(1 << N, dtype=np.int64)
    pop = np.zeros(1 << N, dtype=np.int64)
    for b in range(N):
        pop += (masks >> b) & 1
    return pop


def _check_cap(N: int, K: int, cap: int) -> None:
    if N > cap:
        raise ResourceCapError(f"{N} players exceed the enumeration cap of {cap}")
    if (1 << N) * K * 8 > MEMORY_LIMIT_BYTES:
        raise ResourceCapError(f"2^{N} x {K} values do not fit the memory limit")


# ---------------------------------------------------------------------------
# evaluation engine


def default_threads() -> int:
    env = os.environ.get("QSHAP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"QSHAP_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def job_seed(seed: int, mask: int, rep: int) -> int:
    return derive_seed(seed, "value", mask, rep)


def evaluate_jobs(vf: ValueFunctionSpec, jobs: Iterable[tuple[int, int]], seed: int,
                  cache: ValueCache | None = None, threads: int | None = None) -> tuple[dict, int]:
    """Evaluate ``(mask, rep)`` jobs; returns the values and the number of fresh calls.

    Deterministic value functions are evaluated once per mask (rep 0).
    """
    wanted = []
    seen = set()
    for mask, rep in jobs:
        key = (mask, 0 if vf.deterministic else rep)
        if key not in seen:
            seen.add(key)
            wanted.append(key)
    results: dict[tuple[int, int], float] = {}
    missing = []
    for key in wanted:
        hit = cache.get(*key) if cache is not None else None
        if hit is None:
            missing.append(key)
        else:
            results[key] = hit

    def call(key):
        return vf(key[0], job_seed(seed, *key))

    threads = default_threads() if threads is None else threads
    if threads > 1 and len(missing) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(call, missing))
    else:
        values = [call(key) for key in missing]
    for key, value in zip(missing, values):
        if not math.isfinite(value):
            raise NumericError(f"value function returned {value} for coalition {key[0]:#x}")
        results[key] = value
        if cache is not None:
            cache.put(key[0], key[1], value)
    if vf.deterministic:
        results = _Broadcast(results)
    return results, len(missing)


class _Broadcast(dict):
    """Lookup that maps every rep of a deterministic function to rep 0."""

    def __getitem__(self, key):
        return dict.__getitem__(self, (key[0], 0))


# ---------------------------------------------------------------------------
# estimators


def _shapley_from_table(values: np.ndarray, N: int, pop: np.ndarray, with_dist: bool = False):
    masks = np.arange(1 << N, dtype=np.int64)
    w = np.array([weight(m, N) for m in range(N)])
    phi = np.empty(N)
    std = np.empty(N) if with_dist else None
    for i in range(N):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        delta = values[without | bit] - values[without]
        ws = w[pop[without]]
        phi[i] = np.sum(ws * delta)
        if with_dist:
            second = np.sum(ws * delta * delta)
            std[i] = math.sqrt(max(second - phi[i] ** 2, 0.0))
    return phi, std


def exact_shapley(game, vf: ValueFunctionSpec, cap: int = DEFAULT_CAP, cache: ValueCache | None = None,
                  threads: int | None = None, seed: int = 0) -> ShapleyReport:
    """Exact Shapley values of a deterministic value function by full enumeration."""
    if not vf.deterministic:
        raise ConfigError(f"exact Shapley values need a deterministic value function, {vf.name!r} is not")
    N = _n_players(game)
    _check_cap(N, 1, cap)
    results, calls = evaluate_jobs(vf, ((m, 0) for m in range(1 << N)), seed, cache, threads)
    values = np.array([results[(m, 0)] for m in range(1 << N)])
    phi, std = _shapley_from_table(values, N, _popcounts(N), with_dist=True)
    return ShapleyReport("exact", N, phi, K=1, n=None, alpha=1.0, seeds=[seed], evaluations=1 << N,
                         calls=calls, std_dist=std, pool={m: [float(values[m])] for m in range(1 << N)})


def estimate_full(game, vf: ValueFunctionSpec, K: int, seed: int, cap: int = DEFAULT_CAP,
                  cache: ValueCache | None = None, threads: int | None = None) -> ShapleyReport:
    """Sample-mean estimator over all coalitions with ``K`` realizations each."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    N = _n_players(game)
    _check_cap(N, K, cap)
    jobs = [(m, k) for k in range(K) for m in range(1 << N)]
    results, calls = evaluate_jobs(vf, jobs, seed, cache, threads)
    pop = _popcounts(N)
    table = np.array([[results[(m, k)] for m in range(1 << N)] for k in range(K)])
    per_rep = np.array([_shapley_from_table(table[k], N, pop)[0] for k in range(K)])
    phi = per_rep.mean(axis=0)
    std_dist = None
    method = "full-K"
    if vf.deterministic:
        method = "exact"
        std_dist = _shapley_from_table(table[0], N, pop, with_dist=True)[1]
    pool = {m: [float(v) for v in table[:, m]] for m in range(1 << N)}
    return ShapleyReport(method, N, phi, K=K, n=None, alpha=1.0, seeds=[seed], evaluations=(1 << N) * K,
                         calls=calls, std_dist=std_dist, pool=pool)


def draw_coalition(rng: np.random.Generator, N: int, player: int) -> int:
    """Draw S from the players other than ``player`` with probability w(|S|).

    The size is uniform on 0..N-1 and the subset uniform given the size;
    since N * C(N-1, m) * w(m) = 1 this realizes the Shapley weights.
    """
    others = np.array([j for j in range(1, N + 1) if j != player], dtype=np.int64)
    m = int(rng.integers(0, N))
    chosen = rng.choice(others, size=m, replace=False) if m else []
    mask = 0
    for j in chosen:
        mask |= 1 << (int(j) - 1)
    return mask


def estimate_sampled(game, vf: ValueFunctionSpec, n: int, K: int, seed: int,
                     cache: ValueCache | None = None, threads: int | None = None) -> ShapleyReport:
    """Subsampling estimator with realizations pooled per coalition across players."""
    if n < 1 or K < 1:
        raise ConfigError("n and K must be at least 1")
    N = _n_players(game)
    samples: list[list[int]] = []
    for i in range(1, N + 1):
        rng = make_rng(derive_seed(seed, "coalitions", i))
        samples.append([draw_coalition(rng, N, i) for _ in range(n)])
    counter: dict[int, int] = {}
    jobs = []
    for i in range(1, N + 1):
        bit = 1 << (i - 1)
        for s in samples[i - 1]:
            for mask in (s, s | bit):
                start = counter.get(mask, 0)
                jobs.extend((mask, start + k) for k in range(K))
                counter[mask] = start + K
    results, calls = evaluate_jobs(vf, jobs, seed, cache, threads)
    pool = {mask: [results[(mask, r)] for r in range(c)] for mask, c in counter.items()}
    means = {mask: float(np.mean(vals)) for mask, vals in pool.items()}
    phi = np.empty(N)
    draws = []
    for i in range(1, N + 1):
        bit = 1 << (i - 1)
        deltas = [(s, means[s | bit] - means[s]) for s in samples[i - 1]]
        draws.append(deltas)
        phi[i - 1] = np.mean([d for _, d in deltas])
    return ShapleyReport("sampled-nK", N, phi, K=K, n=n, alpha=float("nan"), seeds=[seed],
                         evaluations=len(jobs), calls=calls, pool=pool, draws=draws)


def estimate(game, vf: ValueFunctionSpec, alpha: float, K: int, seed: int, cap: int = DEFAULT_CAP,
             cache: ValueCache | None = None, threads: int | None = None) -> ShapleyReport:
    """Dispatch on the sampling fraction: ``alpha == 1`` enumerates, otherwise subsamples."""
    N = _n_players(game)
    n = alpha_to_n(alpha, N)
    if alpha == 1.0:
        if vf.deterministic and K == 1:
            report = exact_shapley(game, vf, cap=cap, cache=cache, threads=threads, seed=seed)
        else:
            report = estimate_full(game, vf, K, seed, cap=cap, cache=cache, threads=threads)
    else:
        report = estimate_sampled(game, vf, n, K, seed, cache=cache, threads=threads)
    report.alpha = alpha
    report.n = n if alpha < 1.0 else None
    return report


def combine_runs(reports: list[ShapleyReport]) -> ShapleyReport:
    """Mean over independent runs with the sample standard deviation as ``std_runs``."""
    if not reports:
        raise ConfigError("no runs to combine")
    phis = np.array([r.phi for r in reports])
    first = reports[-1]
    std = phis.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(first.n_players)
    return ShapleyReport(
        first.method, first.n_players, phis.mean(axis=0), K=first.K, n=first.n, alpha=first.alpha,
        seeds=[s for r in reports for s in r.seeds], evaluations=sum(r.evaluations for r in reports),
        calls=sum(r.calls for r in reports), std_runs=std, std_dist=first.std_dist, phi_runs=phis,
        pool=first.pool, draws=first.draws,
    )


# ---------------------------------------------------------------------------
# distributions and pruning


@dataclass
class MarginalDistribution:
    """Per-player ``(delta, weight)`` pairs."""

    entries: list[list[tuple[float, float]]]

    def mean(self) -> np.ndarray:
        return np.array([sum(d * w for d, w in e) / sum(w for _, w in e) for e in self.entries])

    def std(self) -> np.ndarray:
        out = []
        for e in self.entries:
            total = sum(w for _, w in e)
            m1 = sum(d * w for d, w in e) / total
            m2 = sum(d * d * w for d, w in e) / total
            out.append(math.sqrt(max(m2 - m1 * m1, 0.0)))
        return np.array(out)

    def filtered(self, threshold: float = 1e-3) -> "MarginalDistribution":
        """Merge equal deltas, drop entries with probability below ``threshold`` and renormalize."""
        out = []
        for e in self.entries:
            merged: dict[float, float] = {}
            for d, w in e:
                merged[d] = merged.get(d, 0.0) + w
            total = sum(merged.values())
            kept = [(d, w / total) for d, w in sorted(merged.items()) if w / total >= threshold]
            norm = sum(w for _, w in kept)
            out.append([(d, w / norm) for d, w in kept])
        return MarginalDistribution(out)


def marginal_distribution(game, vf: ValueFunctionSpec | None = None, mode: str = "exact",
                          report: ShapleyReport | None = None) -> MarginalDistribution:
    """Distribution of marginal contributions.

    ``exact`` enumerates every coalition (needs a deterministic ``vf`` or a
    complete ``report.pool``); ``sampled`` returns the draws of ``report``
    with weight ``1/n`` each.
    """
    N = _n_players(game)
    if mode == "sampled":
        if report is None or report.draws is None:
            raise ConfigError("sampled marginal distribution needs a subsampling report")
        return MarginalDistribution([[(d, 1.0 / len(dr)) for _, d in dr] for dr in report.draws])
    if mode != "exact":
        raise ConfigError(f"unknown mode {mode!r}")
    if report is not None and len(report.pool) == 1 << N:
        values = np.array([np.mean(report.pool[m]) for m in range(1 << N)])
    else:
        if vf is None or not vf.deterministic:
            raise ConfigError("exact marginal distribution needs a deterministic value function")
        values = np.array([vf(m, 0) for m in range(1 << N)])
    pop = _popcounts(N)
    entries = []
    for i in range(N):
        bit = 1 << i
        e = []
        for m in range(1 << N):
            if not m & bit:
                e.append((float(values[m | bit] - values[m]), weight(int(pop[m]), N)))
        entries.append(e)
    return MarginalDistribution(entries)


def value_multiset(game, k: int, vf: ValueFunctionSpec | None = None,
                   pool: Mapping[int, list[float]] | None = None) -> list[float]:
    """Values of coalitions of size ``k``: all of them from ``vf``, or the sampled ones in ``pool``."""
    N = _n_players(game)
    if not 0 <= k <= N:
        raise ConfigError(f"k={k} outside 0..{N}")
    if pool is not None:
        out = []
        for mask in sorted(pool):
            if bin(mask).count("1") == k:
                out.extend(pool[mask])
        return out
    if vf is None:
        raise ConfigError("value_multiset needs a value function or a pool")
    from itertools import combinations

    out = []
    for combo in combinations(range(N), k):
        mask = sum(1 << j for j in combo)
        out.append(vf(mask, 0))
    return out


def pareto_frontier(multisets: Mapping[int, list[float]]) -> list[dict]:
    """Best value per gate count and the frontier for (min k, max value).

    A row is on the frontier when its best value beats every smaller k.
    """
    rows = []
    running = -math.inf
    for k in sorted(multisets):
        vals = multisets[k]
        if not vals:
            continue
        best = max(vals)
        on = best > running
        running = max(running, best)
        rows.append({"k": k, "best": best, "frontier": running, "on_frontier": on})
    return rows


def pool_multisets(report: ShapleyReport) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for mask in sorted(report.pool):
        out.setdefault(bin(mask).count("1"), []).extend(report.pool[mask])
    return out
