"""A small transpiler onto the {RZ, X, SX, CX} basis with SWAP-based routing.

Pipeline per trial: bind angles, decompose to natives, peephole, route on
the coupling graph from a random initial layout, peephole again. The best
of several seeded trials approximates the most efficient transpilation.
"""

from __future__ import annotations

import cmath
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import Circuit, Const, Gate
from .errors import ConfigError, RoutingError
from .rng import derive_seed, make_rng
from .simulator import gate_matrix, unitary

NATIVE = ("RZ", "X", "SX", "CX")
ANGLE_EPS = 1e-12

OSLO_EDGES = ((0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6))
EHNINGEN_EDGES = (
    (0, 1), (1, 2), (1, 4), (2, 3), (3, 5), (4, 7), (5, 8), (6, 7), (7, 10), (8, 9), (8, 11), (10, 12),
    (11, 14), (12, 13), (12, 15), (13, 14), (14, 16), (15, 18), (16, 19), (17, 18), (18, 21), (19, 20),
    (19, 22), (21, 23), (22, 25), (23, 24), (24, 25), (25, 26),
)


@dataclass(frozen=True)
class HardwareTarget:
    name: str
    n_qubits: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple(tuple(sorted((int(a), int(b)))) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        for a, b in edges:
            if a == b or not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ConfigError(f"target {self.name}: invalid edge ({a}, {b})")

    def neighbors(self, p: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == p} | {a for a, b in self.edges if b == p})

    def adjacent(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in set(self.edges)

    def shortest_path(self, a: int, b: int) -> list[int]:
        prev = {a: None}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            if u == b:
                break
            for w in self.neighbors(u):
                if w not in prev:
                    prev[w] = u
                    queue.append(w)
        if b not in prev:
            raise RoutingError(f"physical qubits {a} and {b} are not connected on target {self.name}")
        path = [b]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        return path[::-1]

    def to_json(self) -> dict:
        return {"qubits": self.n_qubits, "edges": [list(e) for e in self.edges]}


def line_target(n: int) -> HardwareTarget:
    return HardwareTarget(f"line{n}", n, tuple((i, i + 1) for i in range(n - 1)))


BUILTIN_TARGETS = {
    "oslo": HardwareTarget("oslo", 7, OSLO_EDGES),
    "ehningen": HardwareTarget("ehningen", 27, EHNINGEN_EDGES),
}


def load_target(spec) -> HardwareTarget:
    """Target from a built-in name, a JSON file path, a dict, or a target itself."""
    if isinstance(spec, HardwareTarget):
        return spec
    if isinstance(spec, dict):
        try:
            return HardwareTarget(spec.get("name", "custom"), int(spec["qubits"]), tuple(map(tuple, spec["edges"])))
        except KeyError as exc:
            raise ConfigError(f"target config missing field {exc}") from exc
    if spec in BUILTIN_TARGETS:
        return BUILTIN_TARGETS[spec]
    if isinstance(spec, str) and spec.startswith("line") and spec[4:].isdigit():
        return line_target(int(spec[4:]))
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown target {spec!r}")
    doc = json.loads(path.read_text())
    doc.setdefault("name", path.stem)
    return load_target(doc)


# ---------------------------------------------------------------------------
# native ops are plain tuples (kind, qubits, angle)

Op = tuple


def norm_angle(a: float) -> float:
    """Reduce to (-pi, pi]."""
    a = math.fmod(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


def _is_zero(a: float) -> bool:
    return abs(norm_angle(a)) < ANGLE_EPS


def _rz(w: int, a: float) -> list[Op]:
    return [] if _is_zero(a) else [("RZ", (w,), norm_angle(a))]


def euler_zyz(u: np.ndarray) -> tuple[float, float, float]:
    """Angles with u = phase * RZ(phi) RY(theta) RZ(lam)."""
    v = u / cmath.sqrt(np.linalg.det(u))
    theta = 2.0 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    total = 2.0 * cmath.phase(v[1, 1]) if abs(v[1, 1]) > 1e-9 else 0.0
    diff = 2.0 * cmath.phase(v[1, 0]) if abs(v[1, 0]) > 1e-9 else 0.0
    return theta, (total + diff) / 2.0, (total - diff) / 2.0


def decompose_1q(kind: str, angle: float = 0.0, wire: int = 0) -> list[Op]:
    """Native ops (in circuit order) equal to the gate up to global phase."""
    if kind in ("RZ", "P"):
        return _rz(wire, angle)
    if kind in ("X", "SX"):
        return [(kind, (wire,), 0.0)]
    theta, phi, lam = euler_zyz(gate_matrix(kind, angle))
    if abs(theta) < 1e-10:
        return _rz(wire, phi + lam)
    if abs(theta - math.pi / 2) < 1e-10:
        return _rz(wire, lam - math.pi / 2) + [("SX", (wire,), 0.0)] + _rz(wire, phi + math.pi / 2)
    if abs(theta - math.pi) < 1e-10:
        return _rz(wire, lam + math.pi) + [("X", (wire,), 0.0)] + _rz(wire, phi)
    return (_rz(wire, lam) + [("SX", (wire,), 0.0)] + _rz(wire, theta + math.pi)
            + [("SX", (wire,), 0.0)] + _rz(wire, phi + math.pi))


def decompose_2q(kind: str, angle: float = 0.0, qubits: tuple[int, int] = (0, 1)) -> list[Op]:
    c, t = qubits
    if kind == "CX":
        return [("CX", (c, t), 0.0)]
    if kind == "SWAP":
        return [("CX", (c, t), 0.0), ("CX", (t, c), 0.0), ("CX", (c, t), 0.0)]
    if kind == "CP":
        if _is_zero(angle):
            return []
        return (_rz(c, angle / 2) + _rz(t, angle / 2) + [("CX", (c, t), 0.0)]
                + _rz(t, -angle / 2) + [("CX", (c, t), 0.0)])
    raise ConfigError(f"no two-qubit decomposition for {kind}")


def peephole(ops: list[Op]) -> list[Op]:
    """Merge adjacent RZ, drop zero rotations and cancel adjacent identical CX pairs."""
    out: list[Op | None] = []
    stacks: dict[int, list[int]] = {}

    def last(w):
        st = stacks.get(w)
        return st[-1] if st else None

    def pop(idx, wires):
        out[idx] = None
        for w in wires:
            stacks[w].pop()

    for kind, qubits, angle in ops:
        if kind == "RZ":
            w = qubits[0]
            j = last(w)
            if j is not None and out[j][0] == "RZ":
                merged = out[j][2] + angle
                if _is_zero(merged):
                    pop(j, (w,))
                else:
                    out[j] = ("RZ", (w,), norm_angle(merged))
                continue
            if _is_zero(angle):
                continue
        elif kind == "CX":
            a, b = qubits
            j = last(a)
            if j is not None and j == last(b) and out[j][0] == "CX" and out[j][1] == qubits:
                pop(j, qubits)
                continue
        out.append((kind, tuple(qubits), angle))
        for w in qubits:
            stacks.setdefault(w, []).append(len(out) - 1)
    return [op for op in out if op is not None]


# ---------------------------------------------------------------------------
# binding and routing


@dataclass(frozen=True)
class TranspiledCircuit:
    """Native ops on physical qubits.

    ``initial_layout[l]`` is the physical qubit holding logical qubit ``l``
    at the start (ancillas included, so it is a full permutation);
    ``final_layout`` the same after routing.
    """

    ops: tuple[Op, ...]
    n_physical: int
    n_logical: int
    initial_layout: tuple[int, ...]
    final_layout: tuple[int, ...]

    @property
    def n1(self) -> int:
        return sum(1 for op in self.ops if op[0] != "CX")

    @property
    def n2(self) -> int:
        return sum(1 for op in self.ops if op[0] == "CX")

    def to_circuit(self) -> Circuit:
        gates = []
        for kind, qubits, angle in self.ops:
            params = (Const(float(angle)),) if kind == "RZ" else ()
            gates.append(Gate(kind, tuple(qubits), params))
        return Circuit(self.n_physical, tuple(gates))


def penalty(t: TranspiledCircuit, s1: float, s2: float) -> float:
    return t.n1 * s1 + t.n2 * s2


def generic_theta(circuit: Circuit) -> np.ndarray:
    """Stand-in parameter values for structural transpilation of unbound circuits."""
    return make_rng(derive_seed(0, "generic-theta")).uniform(0.1, 2 * math.pi - 0.1, circuit.p)


def generic_x(circuit: Circuit) -> np.ndarray:
    return make_rng(derive_seed(0, "generic-x")).uniform(0.1, 2 * math.pi - 0.1, circuit.k)


def to_native(circuit: Circuit, x=None, theta=None) -> list[Op]:
    """Bind and decompose a primitive circuit to native ops on logical qubits."""
    if circuit.has_layers:
        raise ConfigError("expand LayerRef gates before transpiling")
    x = generic_x(circuit) if x is None else np.asarray(x, dtype=float)
    theta = generic_theta(circuit) if theta is None else np.asarray(theta, dtype=float)
    ops: list[Op] = []
    for g in circuit.gates:
        angle = float(g.params[0].evaluate(theta, x)) if g.params else 0.0
        if len(g.qubits) == 1:
            ops.extend(decompose_1q(g.kind, angle, g.qubits[0]))
        else:
            ops.extend(decompose_2q(g.kind, angle, g.qubits))
    return peephole(ops)


def route(ops: list[Op], n_logical: int, target: HardwareTarget, seed: int) -> TranspiledCircuit:
    """Map logical ops onto the target from a seeded random layout, inserting SWAPs as 3 CX."""
    n = target.n_qubits
    if n_logical > n:
        raise RoutingError(f"{n_logical} logical qubits do not fit target {target.name} ({n})")
    perm = make_rng(seed).permutation(n)
    layout = [int(p) for p in perm]  # logical -> physical
    where = {p: l for l, p in enumerate(layout)}  # physical -> logical
    initial = tuple(layout)
    out: list[Op] = []
    for kind, qubits, angle in ops:
        if kind != "CX":
            out.append((kind, (layout[qubits[0]],), angle))
            continue
        a, b = qubits
        pa, pb = layout[a], layout[b]
        if not target.adjacent(pa, pb):
            path = target.shortest_path(pa, pb)
            for u, w in zip(path[:-2], path[1:-1]):
                out.extend([("CX", (u, w), 0.0), ("CX", (w, u), 0.0), ("CX", (u, w), 0.0)])
                lu, lw = where[u], where[w]
                layout[lu], layout[lw] = w, u
                where[u], where[w] = lw, lu
            pa, pb = layout[a], layout[b]
        out.append(("CX", (pa, pb), 0.0))
    return TranspiledCircuit(tuple(peephole(out)), n, n_logical, initial, tuple(layout))


def transpile(circuit: Circuit, target, seed: int, x=None, theta=None) -> TranspiledCircuit:
    target = load_target(target)
    return route(to_native(circuit, x, theta), circuit.q, target, seed)


def best_of_trials(circuit: Circuit, target, s1: float = -1.0, s2: float = -10.0, trials: int = 50,
                   seed: int = 0, x=None, theta=None) -> tuple[float, TranspiledCircuit]:
    """Best (largest) penalty over seeded trials; trial ``t`` always uses the same derived seed."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if not (s1 < 0 and s2 < s1):
        raise ConfigError("penalties need s2 < s1 < 0")
    target = load_target(target)
    ops = to_native(circuit, x, theta)
    best = None
    for t in range(trials):
        tc = route(ops, circuit.q, target, derive_seed(seed, "trial", t))
        score = penalty(tc, s1, s2)
        if best is None or score > best[0]:
            best = (score, tc)
    return best


# ---------------------------------------------------------------------------
# verification


def permutation_matrix(layout, n: int) -> np.ndarray:
    """Basis map sending logical bit l to physical bit layout[l]."""
    dim = 2**n
    idx = np.arange(dim)
    dest = np.zeros(dim, dtype=np.int64)
    for l, p in enumerate(layout):
        dest |= ((idx >> l) & 1) << p
    m = np.zeros((dim, dim))
    m[dest, idx] = 1.0
    return m


def equivalence_fidelity(circuit: Circuit, tc: TranspiledCircuit, x=None, theta=None) -> float:
    """|Tr(A^dag B)| / 2^n for A = P_final (U x I), B = U_t P_init on the full physical register."""
    n = tc.n_physical
    if circuit.has_layers:
        raise ConfigError("expand LayerRef gates before verifying")
    x = generic_x(circuit) if x is None else x
    theta = generic_theta(circuit) if theta is None else theta
    wide = Circuit(n, circuit.gates, circuit.p, circuit.k)
    a = permutation_matrix(tc.final_layout, n) @ unitary(wide, x, theta)
    b = unitary(tc.to_circuit()) @ permutation_matrix(tc.initial_layout, n)
    return float(abs(np.trace(a.conj().T @ b)) / 2**n)


def is_conformant(tc: TranspiledCircuit, target: HardwareTarget) -> bool:
    for kind, qubits, _ in tc.ops:
        if kind not in NATIVE:
            return False
        if kind == "CX" and not target.adjacent(*qubits):
            return False
    return True
