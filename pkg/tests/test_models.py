import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshap.errors import ConfigError
from qshap.models import (
    Dataset,
    MaxCutGraph,
    OptimizerConfig,
    brute_force_maxcut,
    cut_value,
    feature_map,
    kernel_matrix,
    lognormal_target,
    make_dataset,
    optimize_qaoa,
    predict,
    qaoa_game,
    qgan_game,
    qgan_value,
    qnn_expected_value,
    qnn_game,
    qsvm_game,
    qsvm_value,
    shipped_graph,
    train_svm,
)
from qshap.shapley import ValueFunctionSpec, combine_runs, estimate_sampled, exact_shapley
from qshap.simulator import NoiseModel
from qshap.value_functions import HellingerConfig, make_value_function


@pytest.fixture(scope="module")
def qsvm_data():
    return make_dataset("havlicek-like", 0, sizes=(20, 60))


# --- QSVM ---------------------------------------------------------------


def test_feature_map_shape():
    for r in (1, 2, 3):
        c = feature_map(r)
        assert len(c) == 7 * r and c.q == 2 and c.k == 2
    kinds = [g.kind for g in feature_map(1).gates]
    assert kinds == ["H", "P", "H", "P", "CX", "P", "CX"]
    with pytest.raises(ConfigError):
        feature_map(0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_kernel_symmetric_psd_unit_diagonal(seed):
    x = np.random.default_rng(seed).uniform(0, 2 * np.pi, (8, 2))
    k = kernel_matrix(feature_map(2), x)
    assert np.allclose(k, k.T) and np.allclose(np.diag(k), 1.0)
    assert np.linalg.eigvalsh(k).min() > -1e-10
    assert np.all((k >= 0) & (k <= 1))


def test_datasets_balanced_and_seeded():
    a = make_dataset("havlicek-like", 3, sizes=(10, 20))
    b = make_dataset("havlicek-like", 3, sizes=(10, 20))
    assert np.array_equal(a.train.x, b.train.x) and np.array_equal(a.test.y, b.test.y)
    assert a.train.y.sum() == 5 and a.test.y.sum() == 10
    assert np.all((a.train.x > 0) & (a.train.x <= 2 * np.pi))
    toy = make_dataset("qnn-toy", 0, 20)
    assert len(toy) == 20 and toy.y.sum() == 10
    assert Dataset.from_csv(toy.to_csv()).x.tolist() == toy.x.tolist()
    with pytest.raises(ConfigError):
        make_dataset("unknown", 0)


def test_smo_matches_sklearn(qsvm_data):
    svm = pytest.importorskip("sklearn.svm")
    x, y = qsvm_data.train.x, qsvm_data.train.y
    k = kernel_matrix(feature_map(1), x)
    kt = kernel_matrix(feature_map(1), qsvm_data.test.x, x)
    ours = train_svm(k, y, C=1.0)
    ref = svm.SVC(kernel="precomputed", C=1.0, tol=1e-8).fit(k, y)
    ours_f = kt @ (ours.alpha * ours.y_signed) + ours.bias
    assert np.max(np.abs(ours_f - ref.decision_function(kt))) < 1e-4
    assert np.array_equal(predict(ours, kt), ref.predict(kt))


def test_smo_deterministic(qsvm_data):
    k = kernel_matrix(feature_map(2), qsvm_data.train.x)
    a, b = train_svm(k, qsvm_data.train.y), train_svm(k, qsvm_data.train.y)
    assert np.array_equal(a.alpha, b.alpha) and a.bias == b.bias


def test_constant_kernel_gives_chance_accuracy(qsvm_data):
    game = qsvm_game(1)
    assert qsvm_value(game, 0, qsvm_data) == 0.5


def test_last_cx_is_a_dummy_player(qsvm_data):
    game = qsvm_game(1)
    vf = ValueFunctionSpec("acc", lambda m, s: qsvm_value(game, m, qsvm_data), deterministic=True)
    phi = exact_shapley(game, vf).phi
    assert phi[-1] == 0.0
    assert phi.sum() == pytest.approx(qsvm_value(game, game.grand, qsvm_data) - 0.5)


# --- QNN ---------------------------------------------------------------


def test_qnn_layout():
    game, theta = qnn_game()
    assert len(game.circuit) == 19 and game.remaining == (1, 3) and len(theta) == 4


def test_final_rotation_on_unmeasured_wire_is_dummy():
    game, theta = qnn_game()
    data = make_dataset("qnn-toy", 0, 20)
    last = 1 << (game.n_players - 1)
    for m in np.random.default_rng(0).integers(0, last, 100):
        with_last = qnn_expected_value(game, int(m) | last, data, theta)
        assert with_last == pytest.approx(qnn_expected_value(game, int(m), data, theta), abs=1e-12)
    sampled = make_value_function("accuracy_qnn", game, data=data, theta=theta)
    runs = combine_runs([estimate_sampled(game, sampled, 16, 16, seed) for seed in range(5)])
    assert abs(runs.phi[-1]) < 2 * runs.std_runs[-1]


def test_one_shot_accuracy_averages_to_expected():
    game, theta = qnn_game()
    data = make_dataset("qnn-toy", 0, 20)
    vf = make_value_function("accuracy_qnn", game, data=data, theta=theta)
    draws = [vf(game.grand, s) for s in range(400)]
    expected = qnn_expected_value(game, game.grand, data, theta)
    assert abs(np.mean(draws) - expected) < 4 * np.std(draws) / np.sqrt(400)
    assert expected > 0.6


# --- QGAN ---------------------------------------------------------------


def test_qgan_layout_and_target():
    game, theta = qgan_game()
    assert len(game.circuit) == 16 and game.remaining == (1, 3, 7) and len(theta) == 9
    t = lognormal_target()
    assert t.sum() == pytest.approx(1.0) and t[0] == 0.0


def test_qgan_noise_hurts_and_mitigation_helps():
    game, theta = qgan_game()

    def mean(cfg):
        return np.mean([qgan_value(game, game.grand, theta, cfg, seed) for seed in range(30)])

    low = mean(HellingerConfig(shots=4000, noise=NoiseModel.symmetric(3, 0.02)))
    high = mean(HellingerConfig(shots=4000, noise=NoiseModel.symmetric(3, 0.05)))
    fixed = mean(HellingerConfig(shots=4000, noise=NoiseModel.symmetric(3, 0.05), mitigation=True))
    assert low > high
    assert fixed > high


# --- QAOA ---------------------------------------------------------------


def test_shipped_graph_has_unique_max_cut():
    g = shipped_graph()
    assert g.n_vertices == 7 and len(g.edges) == 10
    best, opt = brute_force_maxcut(g)
    assert best == 9 and len(opt) == 2 and opt[0] ^ opt[1] == 127
    assert cut_value(g, opt[0]) == 9
    assert MaxCutGraph.from_json(g.to_json()) == g
    with pytest.raises(ConfigError):
        MaxCutGraph(3, ((0, 0),))


def test_qaoa_players_are_the_layers():
    game = qaoa_game(shipped_graph(), 3)
    assert game.active == (8, 9, 10, 11, 12, 13)
    assert game.primitive_subcircuit(game.grand).q == 7


def test_optimizer_reaches_max_cut():
    res = optimize_qaoa(shipped_graph(), 4, OptimizerConfig(), seed=0)
    assert res.cut == 9 and res.energy < -7.5
    again = optimize_qaoa(shipped_graph(), 4, OptimizerConfig(), seed=0)
    assert np.array_equal(res.theta, again.theta)


def test_energy_value_function_efficiency():
    game = qaoa_game(shipped_graph(), 1)
    vf = make_value_function("energy", game, theta=[0.4, 1.1])
    rep = exact_shapley(game, vf)
    assert rep.phi.sum() == pytest.approx(vf(game.grand, 0) - vf(0, 0))
    # a mixing layer acting on |+>^n does nothing
    assert vf(2, 0) == pytest.approx(vf(0, 0))
