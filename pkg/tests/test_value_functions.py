import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qshap.circuit import Circuit, CoalitionGame, gate
from qshap.errors import ConfigError
from qshap.simulator import NoiseModel
from qshap.transpiler import load_target
from qshap.value_functions import (
    EntanglingConfig,
    ExpressibilityConfig,
    HellingerConfig,
    accuracy_value,
    energy_value,
    entangling_capability,
    execution_efficiency,
    expressibility,
    fidelity_histogram,
    haar_bin_masses,
    hellinger,
    hellinger_fidelity,
    kl_divergence,
    make_value_function,
    meyer_wallach,
    meyer_wallach_purity,
)

IDLE_1Q = CoalitionGame.all_active(Circuit(1, (gate("H", 0),)))
RY_1Q = CoalitionGame.all_active(Circuit(1, (gate("RY", 0, param="theta[0]"),), p=1))
BELL = CoalitionGame.all_active(Circuit(2, (gate("H", 0), gate("CX", 0, 1))))


def random_states(rng, n, q):
    z = rng.normal(size=(n, 2**q)) + 1j * rng.normal(size=(n, 2**q))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def test_haar_masses_normalized_and_uniform_at_one_qubit():
    assert haar_bin_masses(1, 75) == pytest.approx(np.full(75, 1 / 75))
    for q in (2, 4, 7):
        m = haar_bin_masses(q, 75)
        assert m.sum() == pytest.approx(1.0) and np.all(m >= 0)


def test_histogram_puts_unit_fidelity_in_last_bin():
    h = fidelity_histogram(np.array([1.0, 0.0, 0.5, 1.0 + 1e-15]), 4)
    assert h.tolist() == [0.25, 0.0, 0.25, 0.5]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 20, elements=st.floats(0, 1)), arrays(np.float64, 20, elements=st.floats(1e-3, 1)))
def test_kl_nonnegative(p, q):
    if p.sum() == 0:
        p = np.ones_like(p)
    p, q = p / p.sum(), q / q.sum()
    assert kl_divergence(p, q) >= -1e-12
    assert kl_divergence(q, q) == pytest.approx(0.0, abs=1e-12)


def test_parameter_free_expressibility_closed_form():
    assert -expressibility(IDLE_1Q, 1, ExpressibilityConfig(c_p=100)) == pytest.approx(math.log(75), abs=1e-9)


def test_rotation_more_expressive_than_idle():
    cfg = ExpressibilityConfig(c_p=10_000, seed=0)
    idle = -expressibility(IDLE_1Q, 1, cfg)
    ry = -expressibility(RY_1Q, 1, cfg)
    assert 0 <= ry < idle
    # regression constant for the shipped defaults
    assert ry == pytest.approx(0.21132175214669, abs=1e-9)


def test_expressibility_deterministic_given_seed_and_swap_mode():
    cfg = ExpressibilityConfig(c_p=2000, seed=5)
    assert expressibility(RY_1Q, 1, cfg) == expressibility(RY_1Q, 1, cfg)
    swap = ExpressibilityConfig(c_p=2000, seed=5, mode="swap", shots=100_000)
    assert expressibility(RY_1Q, 1, swap) == pytest.approx(expressibility(RY_1Q, 1, cfg), abs=0.1)
    with pytest.raises(ConfigError):
        ExpressibilityConfig(c_p=0)


def test_expressibility_stable_under_more_samples():
    small = [-expressibility(RY_1Q, 1, ExpressibilityConfig(c_p=1000, seed=s)) for s in range(10)]
    big = -expressibility(RY_1Q, 1, ExpressibilityConfig(c_p=10_000, seed=99))
    se = np.std(small, ddof=1)
    assert abs(big - np.mean(small)) < 3 * se


def test_meyer_wallach_definition_matches_purity_form():
    rng = np.random.default_rng(0)
    for q in (2, 3, 4):
        states = random_states(rng, 100, q)
        assert np.max(np.abs(meyer_wallach(states, q) - meyer_wallach_purity(states, q))) < 1e-10


def test_meyer_wallach_extremes():
    plus = np.full(8, 1 / math.sqrt(8))
    assert meyer_wallach(plus, 3)[0] == pytest.approx(0.0, abs=1e-12)
    assert entangling_capability(BELL, 3) == pytest.approx(1.0, abs=1e-10)
    assert entangling_capability(BELL, 1) == pytest.approx(0.0, abs=1e-12)
    assert entangling_capability(IDLE_1Q, 1) == 0.0


def test_entangling_in_unit_interval_and_parameter_free_constant():
    c = Circuit(2, (gate("RY", 0, param="theta[0]"), gate("CX", 0, 1), gate("RY", 1, param="theta[1]")), p=2)
    game = CoalitionGame.all_active(c)
    v = entangling_capability(game, game.grand, EntanglingConfig(c_s=500))
    assert 0.0 < v < 1.0
    a = entangling_capability(BELL, 3, EntanglingConfig(c_s=3))
    b = entangling_capability(BELL, 3, EntanglingConfig(c_s=300))
    assert a == pytest.approx(b, abs=1e-12)


def test_hellinger_basics():
    p = np.array([0.2, 0.3, 0.5])
    assert hellinger(p, p) == 1.0
    assert hellinger(np.array([1.0, 0]), np.array([0, 1.0])) == 0.0


GHZ = CoalitionGame.all_active(Circuit(3, (gate("H", 0), gate("CX", 0, 1), gate("RY", 2, param="theta[0]")), p=1))


def test_hellinger_noiseless_large_shots():
    cfg = HellingerConfig(shots=100_000)
    assert hellinger_fidelity(GHZ, GHZ.grand, cfg, theta=[0.8], seed=1) > 0.995


def test_hellinger_decreases_with_flip_probability():
    means = []
    for p in (0.0, 0.05, 0.1):
        cfg = HellingerConfig(shots=2000, noise=NoiseModel.symmetric(3, p))
        means.append(np.mean([hellinger_fidelity(GHZ, GHZ.grand, cfg, theta=[0.8], seed=s) for s in range(50)]))
    assert means[0] > means[1] > means[2]


def test_accuracy_value():
    assert accuracy_value([1, 0, 1], [1, 0, 1]) == 1.0
    assert accuracy_value([1, 1], [0, 0]) == 0.0
    with pytest.raises(ConfigError):
        accuracy_value([], [])


def test_energy_value_of_plus_state_and_empty_graph():
    from qshap.models import qaoa_game, shipped_graph

    game = qaoa_game(shipped_graph(), 1)
    assert energy_value(game, 0, [0.3, 0.2]) == pytest.approx(-5.0)
    empty = CoalitionGame(Circuit(2, (gate("H", 0), gate("X", 1))), (2,))
    assert energy_value(empty, 1, None, graph=[]) == 0.0


def test_execution_efficiency_simple_cases():
    oslo = load_target("oslo")
    empty = CoalitionGame(Circuit(2, (gate("H", 0),)), (1,))
    assert execution_efficiency(empty, 0, oslo, trials=3) == 0.0
    h = execution_efficiency(empty, 1, oslo, s1=-1.0, s2=-10.0, trials=3)
    assert h == -3.0  # RZ SX RZ
    cx = CoalitionGame.all_active(Circuit(2, (gate("CX", 0, 1), gate("CX", 0, 1))))
    assert execution_efficiency(cx, 3, oslo, trials=5) == 0.0
    assert execution_efficiency(cx, 1, oslo, trials=5) <= -10.0


def test_registry():
    vf = make_value_function("entangling", BELL, {"c_s": 10})
    assert vf.deterministic and vf(3, 0) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        make_value_function("nope", BELL)
    uncertain = make_value_function("hellinger", GHZ, {"shots": 50, "flip": 0.1}, theta=[0.8])
    assert not uncertain.deterministic
    assert uncertain(7, 1) == uncertain(7, 1)
