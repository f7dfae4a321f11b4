"""Parameterized circuits, coalition games and coalition subcircuits.

Gates are addressed by 1-based position in the circuit. Players are
addressed by 1-based position in the ordered active set, and a coalition
is an integer bitmask whose bit ``i - 1`` marks player ``i``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

# ---------------------------------------------------------------------------
# parameter expressions


class ParamExpr:
    def evaluate(self, theta, x):
        raise NotImplementedError

    def max_theta(self) -> int:
        return -1

    def max_feature(self) -> int:
        return -1

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)


def _wrap(value) -> ParamExpr:
    return value if isinstance(value, ParamExpr) else Const(float(value))


@dataclass(frozen=True)
class Const(ParamExpr):
    value: float

    def evaluate(self, theta, x):
        return self.value

    def __str__(self):
        if self.value == math.pi:
            return "pi"
        return repr(float(self.value))


@dataclass(frozen=True)
class Theta(ParamExpr):
    index: int

    def evaluate(self, theta, x):
        return theta[..., self.index]

    def max_theta(self):
        return self.index

    def __str__(self):
        return f"theta[{self.index}]"


@dataclass(frozen=True)
class Feature(ParamExpr):
    index: int

    def evaluate(self, theta, x):
        return x[..., self.index]

    def max_feature(self):
        return self.index

    def __str__(self):
        return f"x[{self.index}]"


@dataclass(frozen=True)
class _Binary(ParamExpr):
    left: ParamExpr
    right: ParamExpr
    symbol = "?"

    def max_theta(self):
        return max(self.left.max_theta(), self.right.max_theta())

    def max_feature(self):
        return max(self.left.max_feature(), self.right.max_feature())

    def __str__(self):
        return f"({self.left} {self.symbol} {self.right})"


class Add(_Binary):
    symbol = "+"

    def evaluate(self, theta, x):
        return self.left.evaluate(theta, x) + self.right.evaluate(theta, x)


class Sub(_Binary):
    symbol = "-"

    def evaluate(self, theta, x):
        return self.left.evaluate(theta, x) - self.right.evaluate(theta, x)


class Mul(_Binary):
    symbol = "*"

    def evaluate(self, theta, x):
        return self.left.evaluate(theta, x) * self.right.evaluate(theta, x)


def _is_const(expr: ParamExpr) -> bool:
    return expr.max_theta() < 0 and expr.max_feature() < 0


def parse_expr(text: str) -> ParamExpr:
    """Parse ``text`` into a :class:`ParamExpr`.

    Accepts decimal literals, ``pi``, ``theta[i]``, ``x[i]``, ``+``, ``-``,
    ``*`` and parentheses. Unary minus and division by a constant
    subexpression are folded into ``Sub``/``Mul`` nodes.
    """
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse parameter expression {text!r}") from exc
    return _convert(tree.body, text)


def _convert(node, text) -> ParamExpr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return Const(float(node.value))
    if isinstance(node, ast.Name) and node.id == "pi":
        return Const(math.pi)
    if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name):
        idx = node.slice
        if isinstance(idx, ast.Constant) and isinstance(idx.value, int) and idx.value >= 0:
            if node.value.id == "theta":
                return Theta(idx.value)
            if node.value.id == "x":
                return Feature(idx.value)
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return Sub(Const(0.0), _convert(node.operand, text))
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, text)
    if isinstance(node, ast.BinOp):
        left, right = _convert(node.left, text), _convert(node.right, text)
        if isinstance(node.op, ast.Add):
            return Add(left, right)
        if isinstance(node.op, ast.Sub):
            return Sub(left, right)
        if isinstance(node.op, ast.Mult):
            return Mul(left, right)
        if isinstance(node.op, ast.Div) and _is_const(right):
            denom = float(right.evaluate(None, None))
            if denom == 0.0:
                raise ConfigError(f"division by zero in {text!r}")
            return Mul(left, Const(1.0 / denom))
    raise ConfigError(f"unsupported syntax in parameter expression {text!r}")


# ---------------------------------------------------------------------------
# gates and circuits

ARITY = {
    "H": 1, "X": 1, "SX": 1, "RZ": 1, "RY": 1, "RX": 1, "P": 1,
    "CP": 2, "CX": 2, "SWAP": 2,
}
PARAM_SLOTS = {"RZ": 1, "RY": 1, "RX": 1, "P": 1, "CP": 1, "LayerRef": 1}
LAYER_KINDS = ("cost", "mix")
KINDS = tuple(ARITY) + ("LayerRef",)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[ParamExpr, ...] = ()
    layer: str | None = None

    @property
    def name(self) -> str:
        if self.kind == "LayerRef":
            return "U_cost" if self.layer == "cost" else "U_mix"
        return self.kind

    def check(self, position: int | None = None) -> None:
        where = f"gate {position}: " if position is not None else ""
        if self.kind not in KINDS:
            raise ConfigError(f"{where}unknown gate kind {self.kind!r}")
        if self.kind == "LayerRef":
            if self.layer not in LAYER_KINDS:
                raise ConfigError(f"{where}LayerRef needs layer in {LAYER_KINDS}, got {self.layer!r}")
        elif len(self.qubits) != ARITY[self.kind]:
            raise ConfigError(
                f"{where}{self.kind} expects {ARITY[self.kind]} qubit operand(s), got {len(self.qubits)}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ConfigError(f"{where}{self.kind} operands must be distinct")
        if len(self.params) != PARAM_SLOTS.get(self.kind, 0):
            raise ConfigError(
                f"{where}{self.kind} expects {PARAM_SLOTS.get(self.kind, 0)} parameter(s), got {len(self.params)}"
            )


def gate(kind: str, *qubits: int, param=None, layer: str | None = None) -> Gate:
    params: tuple[ParamExpr, ...] = ()
    if param is not None:
        params = (parse_expr(param) if isinstance(param, str) else _wrap(param),)
    return Gate(kind, tuple(int(q) for q in qubits), params, layer)


@dataclass(frozen=True)
class Circuit:
    q: int
    gates: tuple[Gate, ...] = ()
    p: int = 0
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.q < 1:
            raise ConfigError("circuit needs at least one qubit")
        for pos, g in enumerate(self.gates, start=1):
            g.check(pos)
            for w in g.qubits:
                if not 0 <= w < self.q:
                    raise ConfigError(f"gate {pos}: qubit {w} out of range for {self.q} qubits")
            for expr in g.params:
                if expr.max_theta() >= self.p:
                    raise ConfigError(f"gate {pos}: theta[{expr.max_theta()}] out of range (p={self.p})")
                if expr.max_feature() >= self.k:
                    raise ConfigError(f"gate {pos}: x[{expr.max_feature()}] out of range (k={self.k})")

    def __len__(self):
        return len(self.gates)

    def gate(self, g: int) -> Gate:
        """Gate with 1-based index ``g``."""
        return self.gates[g - 1]

    def with_gates(self, gates: Iterable[Gate]) -> "Circuit":
        return Circuit(self.q, tuple(gates), self.p, self.k)

    @property
    def has_layers(self) -> bool:
        return any(g.kind == "LayerRef" for g in self.gates)


@dataclass(frozen=True)
class CoalitionGame:
    """A circuit with its ordered active gates (players) and the remainder.

    ``graph`` is only needed when the circuit contains ``LayerRef`` gates.
    """

    circuit: Circuit
    active: tuple[int, ...]
    graph: tuple[tuple[int, int], ...] | None = None
    remaining: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        active = tuple(int(a) for a in self.active)
        object.__setattr__(self, "active", active)
        G = len(self.circuit)
        if not active:
            raise ConfigError("a coalition game needs at least one active gate")
        if len(set(active)) != len(active):
            raise ConfigError("active gate indices must be distinct")
        for a in active:
            if not 1 <= a <= G:
                raise ConfigError(f"active gate index {a} outside 1..{G}")
        rest = tuple(g for g in range(1, G + 1) if g not in set(active))
        object.__setattr__(self, "remaining", rest)
        if self.graph is not None:
            object.__setattr__(self, "graph", tuple(tuple(e) for e in self.graph))

    @classmethod
    def all_active(cls, circuit: Circuit, graph=None) -> "CoalitionGame":
        return cls(circuit, tuple(range(1, len(circuit) + 1)), graph)

    @property
    def n_players(self) -> int:
        return len(self.active)

    @property
    def grand(self) -> int:
        return (1 << self.n_players) - 1

    def gate_of_player(self, i: int) -> int:
        return self.active[i - 1]

    def gate_indices(self, s: int) -> list[int]:
        check_coalition(s, self.n_players)
        chosen = {self.active[a] for a in range(self.n_players) if s >> a & 1}
        chosen.update(self.remaining)
        return sorted(chosen)

    def subcircuit(self, s: int) -> Circuit:
        return subcircuit(self, s)

    def primitive_subcircuit(self, s: int) -> Circuit:
        sub = subcircuit(self, s)
        return expand_layers(sub, self.graph) if sub.has_layers else sub


def check_coalition(s: int, n_players: int) -> None:
    if s < 0 or s >> n_players:
        raise ConfigError(f"coalition mask {s:#x} has bits above player {n_players}")


def coalition(*players: int) -> int:
    """Bitmask for the given 1-based player indices."""
    mask = 0
    for i in players:
        mask |= 1 << (i - 1)
    return mask


def players_of(s: int) -> list[int]:
    out, i = [], 1
    while s:
        if s & 1:
            out.append(i)
        s >>= 1
        i += 1
    return out


def subcircuit(game: CoalitionGame, s: int) -> Circuit:
    """Circuit of the gates ``{A_a | a in s} ∪ R`` in original order."""
    c = game.circuit
    return c.with_gates(c.gates[g - 1] for g in game.gate_indices(s))


def expand_layers(circuit: Circuit, graph: Sequence[Sequence[int]] | None) -> Circuit:
    """Replace each ``LayerRef`` by primitive gates.

    Cost layer with angle t: ``CX(a,b) RZ(2t)_b CX(a,b)`` for every edge in
    sorted order. Mixing layer with angle t: ``RX(2t)`` on every wire.
    """
    if not circuit.has_layers:
        return circuit
    if graph is None:
        raise ConfigError("LayerRef gates need a graph to expand")
    edges = sorted(tuple(sorted(map(int, e))) for e in graph)
    for a, b in edges:
        if not (0 <= a < circuit.q and 0 <= b < circuit.q) or a == b:
            raise ConfigError(f"graph edge ({a}, {b}) does not fit {circuit.q} qubits")
    out: list[Gate] = []
    for g in circuit.gates:
        if g.kind != "LayerRef":
            out.append(g)
            continue
        angle = Mul(Const(2.0), g.params[0])
        wires = g.qubits or tuple(range(circuit.q))
        if g.layer == "cost":
            for a, b in edges:
                if a in wires and b in wires:
                    out += [Gate("CX", (a, b)), Gate("RZ", (b,), (angle,)), Gate("CX", (a, b))]
        else:
            out += [Gate("RX", (w,), (angle,)) for w in sorted(wires)]
    return circuit.with_gates(out)


# ---------------------------------------------------------------------------
# config documents


def circuit_from_config(doc: dict) -> Circuit:
    if not isinstance(doc, dict):
        raise ConfigError("circuit document must be a JSON object")
    try:
        q = int(doc["qubits"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("circuit document needs integer 'qubits'") from exc
    p = int(doc.get("theta_dim", 0))
    k = int(doc.get("feature_dim", 0))
    raw = doc.get("gates", [])
    if not isinstance(raw, list):
        raise ConfigError("'gates' must be a list")
    gates = []
    for pos, entry in enumerate(raw, start=1):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"gate {pos}: entry must be an object with 'kind'")
        kind = entry["kind"]
        qubits = entry.get("qubits", [])
        if not isinstance(qubits, list) or not all(isinstance(w, int) for w in qubits):
            raise ConfigError(f"gate {pos}: 'qubits' must be a list of integers")
        params = ()
        if "param" in entry and entry["param"] is not None:
            try:
                params = (parse_expr(str(entry["param"])),)
            except ConfigError as exc:
                raise ConfigError(f"gate {pos}: {exc}") from exc
        gates.append(Gate(kind, tuple(qubits), params, entry.get("layer")))
    return Circuit(q, tuple(gates), p, k)


def circuit_to_config(circuit: Circuit) -> dict:
    gates = []
    for g in circuit.gates:
        entry: dict = {"kind": g.kind, "qubits": list(g.qubits)}
        if g.params:
            entry["param"] = str(g.params[0])
        if g.layer is not None:
            entry["layer"] = g.layer
        gates.append(entry)
    return {"qubits": circuit.q, "theta_dim": circuit.p, "feature_dim": circuit.k, "gates": gates}


def bind(expr: ParamExpr, theta, x) -> float:
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    x = np.zeros(0) if x is None else np.asarray(x, dtype=float)
    return float(expr.evaluate(theta, x))
