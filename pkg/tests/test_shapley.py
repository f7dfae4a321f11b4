import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshap.errors import ConfigError, NumericError, ResourceCapError
from qshap.rng import make_rng
from qshap.shapley import (
    MemoryCache,
    ValueFunctionSpec,
    alpha_to_n,
    combine_runs,
    draw_coalition,
    estimate,
    estimate_full,
    estimate_sampled,
    exact_shapley,
    marginal_distribution,
    pareto_frontier,
    value_multiset,
    weight,
)


def table_vf(values, name="table"):
    values = np.asarray(values, dtype=float)
    return ValueFunctionSpec(name, lambda m, s: float(values[m]), deterministic=True)


def noisy_vf(values, sigma):
    values = np.asarray(values, dtype=float)
    return ValueFunctionSpec("noisy", lambda m, s: float(values[m] + sigma * make_rng(s).standard_normal()))


def permutation_oracle(values, N):
    phi = np.zeros(N)
    perms = list(itertools.permutations(range(N)))
    for perm in perms:
        mask = 0
        for i in perm:
            phi[i] += values[mask | 1 << i] - values[mask]
            mask |= 1 << i
    return phi / len(perms)


games = st.integers(1, 10).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.floats(-10, 10), min_size=1 << n, max_size=1 << n))
)


def test_weights():
    assert [weight(m, 3) for m in range(3)] == pytest.approx([1 / 3, 1 / 6, 1 / 3])
    for N in range(1, 13):
        assert weight(0, N) == pytest.approx(1 / N)
        total = sum(math.comb(N - 1, m) * weight(m, N) for m in range(N))
        assert total == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        weight(3, 3)


def test_unanimity_and_additive_games():
    unanimity = [0.0] * 7 + [1.0]
    assert exact_shapley(3, table_vf(unanimity)).phi == pytest.approx([1 / 3] * 3)
    c = np.array([0.5, -1.0, 2.0, 0.25])
    additive = [float(sum(c[i] for i in range(4) if m >> i & 1)) for m in range(16)]
    assert exact_shapley(4, table_vf(additive)).phi == pytest.approx(c)


@settings(max_examples=100, deadline=None)
@given(games)
def test_efficiency(game):
    n, values = game
    phi = exact_shapley(n, table_vf(values), threads=1).phi
    assert abs(phi.sum() - (values[-1] - values[0])) < 1e-10 * max(1.0, np.abs(values).max())


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 7).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.floats(-10, 10), min_size=1 << n, max_size=1 << n))))
def test_matches_permutation_oracle(game):
    n, values = game
    phi = exact_shapley(n, table_vf(values), threads=1).phi
    assert np.max(np.abs(phi - permutation_oracle(values, n))) < 1e-10


@settings(max_examples=50, deadline=None)
@given(games, st.data())
def test_linearity_and_affine_scaling(game, data):
    n, v1 = game
    v2 = data.draw(st.lists(st.floats(-10, 10), min_size=1 << n, max_size=1 << n))
    a = data.draw(st.floats(0.1, 5))
    b = data.draw(st.floats(-5, 5))
    p1 = exact_shapley(n, table_vf(v1), threads=1).phi
    p2 = exact_shapley(n, table_vf(v2), threads=1).phi
    p12 = exact_shapley(n, table_vf(np.add(v1, v2)), threads=1).phi
    assert np.max(np.abs(p12 - p1 - p2)) < 1e-10
    pa = exact_shapley(n, table_vf(a * np.asarray(v1) + b), threads=1).phi
    assert np.max(np.abs(pa - a * p1)) < 1e-9


def test_symmetric_and_dummy_players():
    rng = np.random.default_rng(3)
    N = 5
    base = rng.normal(size=1 << N)
    values = np.empty(1 << N)
    for m in range(1 << N):
        # players 1 and 2 interchangeable, player 5 a dummy
        swapped = (m & ~3) | ((m & 1) << 1) | ((m >> 1) & 1)
        core = min(m & 15, swapped & 15)
        values[m] = base[core]
    phi = exact_shapley(N, table_vf(values)).phi
    assert abs(phi[0] - phi[1]) < 1e-12
    assert phi[4] == 0.0


def test_distribution_std_and_marginals_for_unanimity():
    vf = table_vf([0.0] * 7 + [1.0])
    report = exact_shapley(3, vf)
    assert report.std_dist[0] == pytest.approx(math.sqrt(1 / 3 - 1 / 9))
    dist = marginal_distribution(3, vf)
    merged = dist.filtered(0.0).entries[0]
    assert merged == [(0.0, pytest.approx(2 / 3)), (1.0, pytest.approx(1 / 3))]
    for e in dist.entries:
        assert sum(w for _, w in e) == pytest.approx(1.0)
    assert dist.std() == pytest.approx(report.std_dist)


def test_additive_marginals_are_point_masses():
    c = [1.0, 2.0, 3.0]
    values = [sum(c[i] for i in range(3) if m >> i & 1) for m in range(8)]
    dist = marginal_distribution(3, table_vf(values))
    assert dist.std() == pytest.approx([0, 0, 0])
    assert dist.mean() == pytest.approx(c)


def test_filter_drops_rare_entries():
    from qshap.shapley import MarginalDistribution

    d = MarginalDistribution([[(0.0, 0.9995), (1.0, 0.0005)]]).filtered(1e-3)
    assert d.entries == [[(0.0, 1.0)]]


def test_alpha_to_n():
    assert alpha_to_n(1.0, 5) == 16
    assert alpha_to_n(0.01, 21) == 10486
    assert alpha_to_n(0.001, 14) == 9
    with pytest.raises(ConfigError):
        alpha_to_n(0.0, 3)
    with pytest.raises(ConfigError):
        alpha_to_n(1.5, 3)


def test_full_estimator_counts_and_deterministic_reduction():
    values = np.random.default_rng(0).normal(size=32)
    vf = table_vf(values)
    exact = exact_shapley(5, vf).phi
    for K in (1, 3):
        r = estimate_full(5, vf, K, seed=1)
        assert np.allclose(r.phi, exact, atol=1e-12)
        assert r.evaluations == 32 * K
    noisy = noisy_vf(values, 0.1)
    assert estimate_full(5, noisy, 2, 1).evaluations == 2 * estimate_full(5, noisy, 1, 1).evaluations


def test_sampled_estimator_on_additive_game_is_exact():
    c = np.array([0.3, -1.2, 2.2, 0.7, 1.0])
    values = [float(sum(c[i] for i in range(5) if m >> i & 1)) for m in range(32)]
    for seed in range(5):
        r = estimate_sampled(5, table_vf(values), n=3, K=2, seed=seed)
        assert np.allclose(r.phi, c, atol=1e-12)
        assert r.evaluations <= 2 * 3 * 5 * 2


def test_coalition_sizes_are_uniform():
    rng = make_rng(11)
    N = 6
    sizes = [bin(draw_coalition(rng, N, 2)).count("1") for _ in range(12_000)]
    counts = np.bincount(sizes, minlength=N)
    assert np.all(np.abs(counts / 12_000 - 1 / N) < 0.02)
    assert all(not draw_coalition(rng, N, 2) & 2 for _ in range(200))


def test_sampled_estimator_converges_to_exact():
    values = np.random.default_rng(4).normal(size=1 << 8)
    vf = table_vf(values)
    exact = exact_shapley(8, vf).phi
    reps = np.array([estimate_sampled(8, vf, 32, 1, seed).phi for seed in range(300)])
    se = reps.std(axis=0, ddof=1) / math.sqrt(len(reps))
    assert np.all(np.abs(reps.mean(axis=0) - exact) < 4 * se)


def test_seeds_determine_results_regardless_of_threads():
    values = np.random.default_rng(1).normal(size=1 << 6)
    vf = noisy_vf(values, 0.2)
    a = estimate(6, vf, 0.25, 3, seed=9, threads=1)
    b = estimate(6, vf, 0.25, 3, seed=9, threads=4)
    assert np.array_equal(a.phi, b.phi)
    c = estimate(6, vf, 1.0, 2, seed=9, threads=3)
    d = estimate(6, vf, 1.0, 2, seed=9, threads=1)
    assert np.array_equal(c.phi, d.phi)


def test_cache_avoids_reevaluation():
    calls = []

    def f(m, s):
        calls.append(m)
        return float(m)

    vf = ValueFunctionSpec("count", f, deterministic=True)
    cache = MemoryCache()
    first = exact_shapley(4, vf, cache=cache, threads=1)
    assert len(calls) == 16 and first.calls == 16
    second = exact_shapley(4, vf, cache=cache, threads=1)
    assert len(calls) == 16 and second.calls == 0
    assert np.array_equal(first.phi, second.phi)


def test_caps_and_errors():
    vf = table_vf([0.0, 1.0])
    with pytest.raises(ResourceCapError):
        exact_shapley(30, vf)
    with pytest.raises(ConfigError):
        exact_shapley(1, noisy_vf([0.0, 1.0], 0.1))
    bad = ValueFunctionSpec("nan", lambda m, s: float("nan"), deterministic=True)
    with pytest.raises(NumericError):
        exact_shapley(2, bad)


def test_value_multisets_and_frontier():
    values = [float(bin(m).count("1")) for m in range(16)]
    vf = table_vf(values)
    assert value_multiset(4, 4, vf) == [4.0]
    assert value_multiset(4, 0, vf) == [0.0]
    assert len(value_multiset(4, 2, vf)) == 6
    frontier = pareto_frontier({k: value_multiset(4, k, vf) for k in range(5)})
    assert [(r["k"], r["best"]) for r in frontier] == [(k, float(k)) for k in range(5)]
    assert all(r["on_frontier"] for r in frontier)


def test_combine_runs_reports_spread():
    values = np.random.default_rng(2).normal(size=8)
    vf = noisy_vf(values, 0.5)
    runs = [estimate_full(3, vf, 1, seed) for seed in range(4)]
    combined = combine_runs(runs)
    assert np.allclose(combined.phi, np.mean([r.phi for r in runs], axis=0))
    assert np.all(combined.std_runs > 0)
    doc = combined.to_json()
    assert doc["players"][0]["player"] == 1 and len(doc["seeds"]) == 4
