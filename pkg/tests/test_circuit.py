import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshap.circuit import (
    Circuit,
    CoalitionGame,
    circuit_from_config,
    circuit_to_config,
    coalition,
    expand_layers,
    gate,
    parse_expr,
    players_of,
)
from qshap.errors import ConfigError
from qshap.models import feature_map
from qshap.simulator import unitary


def test_feature_map_expressions_evaluate():
    x = np.array([0.3, 1.7])
    assert parse_expr("2*x[0]").evaluate(None, x) == pytest.approx(0.6)
    phi = parse_expr("2*(pi - x[0])*(pi - x[1])")
    assert phi.evaluate(None, x) == pytest.approx(2 * (math.pi - 0.3) * (math.pi - 1.7))
    assert phi.evaluate(None, np.array([math.pi, math.pi])) == 0.0


def test_expression_round_trip_and_division():
    e = parse_expr("-theta[1]/2 + 0.5*x[0]")
    again = parse_expr(str(e))
    theta, x = np.array([0.0, 1.2]), np.array([3.0])
    assert again.evaluate(theta, x) == pytest.approx(e.evaluate(theta, x)) == pytest.approx(0.9)


@pytest.mark.parametrize("bad", ["theta", "x[0]**2", "foo(1)", "1/0", "theta[-1]"])
def test_bad_expressions_rejected(bad):
    with pytest.raises(ConfigError):
        parse_expr(bad)


def test_example_subcircuit():
    # A = {2,...,6}, R = {1}; the coalition of the players for gates 2 and 5
    c = Circuit(2, (gate("H", 0), gate("H", 1), gate("CX", 0, 1), gate("X", 0), gate("RZ", 1, param=0.3),
                    gate("SX", 0)))
    game = CoalitionGame(c, (2, 3, 4, 5, 6))
    assert game.remaining == (1,)
    s = coalition(1, 4)
    assert game.gate_indices(s) == [1, 2, 5]
    assert game.subcircuit(s).gates == (c.gate(1), c.gate(2), c.gate(5))


def test_grand_and_empty_coalitions():
    c = feature_map(1)
    game = CoalitionGame.all_active(c)
    assert game.subcircuit(game.grand) == c
    empty = game.subcircuit(0)
    assert len(empty) == 0 and empty.q == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1))))
def test_subcircuit_is_ordered_subsequence(args):
    n, s = args
    c = Circuit(2, tuple(gate("H", i % 2) for i in range(n + 2)))
    game = CoalitionGame(c, tuple(range(2, n + 2)))
    idx = game.gate_indices(s)
    assert idx == sorted(idx)
    assert set(game.remaining) <= set(idx)
    assert len(idx) == len(game.remaining) + bin(s).count("1")


def test_players_of_inverts_coalition():
    assert players_of(coalition(1, 3, 7)) == [1, 3, 7]


def test_coalition_mask_bits_above_n_rejected():
    game = CoalitionGame.all_active(feature_map(1))
    with pytest.raises(ConfigError):
        game.subcircuit(1 << 7)


def test_config_round_trip_and_counts():
    doc = circuit_to_config(feature_map(2))
    c = circuit_from_config(doc)
    assert len(c) == 14 and c.q == 2 and c.k == 2
    assert circuit_from_config({"qubits": 1, "gates": []}).gates == ()


def test_config_errors_name_the_gate():
    with pytest.raises(ConfigError, match="gate 2"):
        circuit_from_config({"qubits": 2, "gates": [{"kind": "H", "qubits": [0]}, {"kind": "CX", "qubits": [0]}]})
    with pytest.raises(ConfigError, match="gate 1"):
        circuit_from_config({"qubits": 2, "gates": [{"kind": "RZ", "qubits": [0], "param": "theta[3]"}]})
    with pytest.raises(ConfigError):
        CoalitionGame(feature_map(1), ())


def test_cost_layer_expansion_matches_zz_phase():
    c = Circuit(2, (gate("LayerRef", param="theta[0]", layer="cost"),), p=1)
    expanded = expand_layers(c, [(0, 1)])
    assert [g.kind for g in expanded.gates] == ["CX", "RZ", "CX"]
    t = 0.37
    u = unitary(expanded, None, [t])
    # exp(-i t Z Z) up to a global phase: diag(1, e^{2it}, e^{2it}, 1)
    target = np.diag([1, np.exp(2j * t), np.exp(2j * t), 1])
    assert abs(np.trace(u.conj().T @ target)) / 4 > 1 - 1e-10


def test_mix_layer_expands_to_one_rotation_per_wire():
    c = Circuit(3, (gate("LayerRef", param="theta[0]", layer="mix"),), p=1)
    kinds = [(g.kind, g.qubits) for g in expand_layers(c, [(0, 1)]).gates]
    assert kinds == [("RX", (0,)), ("RX", (1,)), ("RX", (2,))]


def test_layers_need_a_graph():
    c = Circuit(2, (gate("LayerRef", param="theta[0]", layer="cost"),), p=1)
    with pytest.raises(ConfigError):
        expand_layers(c, None)
    assert expand_layers(feature_map(1), None) == feature_map(1)
