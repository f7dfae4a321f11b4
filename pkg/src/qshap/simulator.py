"""Statevector simulation, shot sampling, readout noise and mitigation.

Index convention: wire ``j`` is bit ``j`` of the basis index, i.e. index
``sum_j b_j 2**j``. Bit strings are printed wire 0 first, so the string
``"10"`` on two qubits is index 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, Gate
from .errors import ConfigError, MitigationError, NumericError
from .rng import make_rng

_S2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "SX": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
}


def gate_matrix(kind: str, angle: float = 0.0) -> np.ndarray:
    """Matrix of a primitive gate; two-qubit matrices use basis |c t> with c most significant.

    Conventions: RZ(l) = diag(e^{-il/2}, e^{il/2}), P(l) = diag(1, e^{il}),
    RY/RX the usual half-angle rotations, SX = sqrt(X) with e^{i pi/4} phase.
    """
    if kind in _FIXED:
        return _FIXED[kind].copy()
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if kind == "RZ":
        return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    if kind == "P":
        return np.diag([1.0, np.exp(1j * angle)]).astype(complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "CX":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if kind == "CP":
        return np.diag([1, 1, 1, np.exp(1j * angle)]).astype(complex)
    if kind == "SWAP":
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    raise ConfigError(f"no matrix for gate kind {kind!r}")


def _batched_1q(kind: str, angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    out = np.empty(angle.shape + (2, 2), dtype=complex)
    if kind == "RY":
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, -s, s, c
    elif kind == "RX":
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, -1j * s, -1j * s, c
    else:
        raise ConfigError(kind)
    return out


def _axis(q: int, wire: int) -> int:
    # axis 0 is the batch axis; the tensor axis of wire j is q - j
    return q - wire


def _sl(q: int, **fixed) -> tuple:
    idx = [slice(None)] * (q + 1)
    for wire, bit in fixed.items():
        idx[_axis(q, int(wire[1:]))] = bit
    return tuple(idx)


def apply_gate(state: np.ndarray, q: int, g: Gate, angle) -> np.ndarray:
    """Apply a bound primitive gate to a batch of states shaped ``(B,) + (2,)*q``.

    ``angle`` is a scalar or an array of shape ``(B,)``.
    """
    kind = g.kind
    if kind in ("RZ", "P", "CP"):
        a = np.asarray(angle, dtype=float)
        rest = q - len(g.qubits)

        def phase(factor):
            ph = np.exp(1j * factor * a)
            return ph.reshape((-1,) + (1,) * rest) if a.ndim else ph

        if kind == "RZ":
            w = g.qubits[0]
            state[_sl(q, **{f"w{w}": 0})] *= phase(-0.5)
            state[_sl(q, **{f"w{w}": 1})] *= phase(0.5)
        elif kind == "P":
            state[_sl(q, **{f"w{g.qubits[0]}": 1})] *= phase(1.0)
        else:
            c, t = g.qubits
            state[_sl(q, **{f"w{c}": 1, f"w{t}": 1})] *= phase(1.0)
        return state
    if kind == "CX":
        c, t = g.qubits
        i0, i1 = _sl(q, **{f"w{c}": 1, f"w{t}": 0}), _sl(q, **{f"w{c}": 1, f"w{t}": 1})
        tmp = state[i0].copy()
        state[i0] = state[i1]
        state[i1] = tmp
        return state
    if kind == "SWAP":
        a, b = g.qubits
        i0, i1 = _sl(q, **{f"w{a}": 0, f"w{b}": 1}), _sl(q, **{f"w{a}": 1, f"w{b}": 0})
        tmp = state[i0].copy()
        state[i0] = state[i1]
        state[i1] = tmp
        return state
    if kind in _FIXED or np.ndim(angle) == 0:
        m = _FIXED[kind] if kind in _FIXED else gate_matrix(kind, float(angle))
        ax = _axis(q, g.qubits[0])
        moved = np.moveaxis(state, ax, -1)
        return np.moveaxis(moved @ m.T, -1, ax)
    if kind in ("RY", "RX"):
        m = _batched_1q(kind, np.asarray(angle, dtype=float))  # (B,2,2)
        ax = _axis(q, g.qubits[0])
        moved = np.moveaxis(state, ax, -1)
        shape = moved.shape
        flat = moved.reshape(shape[0], -1, 2)
        out = np.einsum("bij,bmj->bmi", m, flat).reshape(shape)
        return np.moveaxis(out, -1, ax)
    raise ConfigError(f"cannot simulate gate kind {kind!r}")


def simulate(circuit: Circuit, x=None, theta=None) -> np.ndarray:
    """Batched statevector simulation.

    ``x`` has shape ``(k,)`` or ``(B, k)``; ``theta`` shape ``(p,)`` or
    ``(B, p)``. Returns amplitudes of shape ``(B, 2**q)``; ``B`` is 1 when
    neither input is batched.
    """
    if circuit.has_layers:
        raise ConfigError("circuit contains unexpanded LayerRef gates")
    x = np.zeros((1, circuit.k)) if x is None else np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.zeros((1, circuit.p)) if theta is None else np.atleast_2d(np.asarray(theta, dtype=float))
    if x.shape[1] != circuit.k or theta.shape[1] != circuit.p:
        raise ConfigError(
            f"dimension mismatch: circuit wants k={circuit.k}, p={circuit.p}; got {x.shape[1]}, {theta.shape[1]}"
        )
    B = max(x.shape[0], theta.shape[0])
    if x.shape[0] not in (1, B) or theta.shape[0] not in (1, B):
        raise ConfigError("batch sizes of x and theta disagree")
    q = circuit.q
    state = np.zeros((B,) + (2,) * q, dtype=complex)
    state[(slice(None),) + (0,) * q] = 1.0
    for g in circuit.gates:
        angle = 0.0
        if g.params:
            angle = np.asarray(g.params[0].evaluate(theta, x), dtype=float)
            if angle.ndim:
                angle = angle if angle.shape[0] == B else np.broadcast_to(angle, (B,))
                if np.all(angle == angle[0]):
                    angle = float(angle[0])
            else:
                angle = float(angle)
        state = apply_gate(state, q, g, angle)
    return state.reshape(B, 2**q)


@dataclass(frozen=True)
class Statevector:
    q: int
    amplitudes: np.ndarray

    def norm_error(self) -> float:
        return abs(1.0 - float(np.vdot(self.amplitudes, self.amplitudes).real))


def run(circuit: Circuit, x=None, theta=None) -> Statevector:
    return Statevector(circuit.q, simulate(circuit, x, theta)[0])


def unitary(circuit: Circuit, x=None, theta=None) -> np.ndarray:
    """Full 2^q x 2^q matrix of a bound circuit (columns = images of basis states)."""
    q = circuit.q
    dim = 2**q
    state = np.eye(dim, dtype=complex).reshape((dim,) + (2,) * q)
    xa = np.zeros(circuit.k) if x is None else np.asarray(x, dtype=float)
    ta = np.zeros(circuit.p) if theta is None else np.asarray(theta, dtype=float)
    for g in circuit.gates:
        angle = float(g.params[0].evaluate(ta, xa)) if g.params else 0.0
        state = apply_gate(state, q, g, angle)
    return state.reshape(dim, dim).T


# ---------------------------------------------------------------------------
# measurement


def bitstring(index: int, q: int) -> str:
    return "".join("1" if index >> j & 1 else "0" for j in range(q))


def bit_index(bits: str) -> int:
    return sum(1 << j for j, ch in enumerate(bits) if ch == "1")


def probabilities(psi: Statevector | np.ndarray) -> np.ndarray:
    """Born-rule distribution over basis indices."""
    amps = psi.amplitudes if isinstance(psi, Statevector) else np.asarray(psi)
    return np.abs(amps) ** 2


@dataclass(frozen=True)
class ShotRecord:
    q: int
    counts: np.ndarray  # length 2**q, indexed by basis index

    @property
    def shots(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[str, int]:
        return {bitstring(i, self.q): int(c) for i, c in enumerate(self.counts) if c}

    @classmethod
    def from_dict(cls, q: int, counts: Mapping[str, int]) -> "ShotRecord":
        arr = np.zeros(2**q, dtype=np.int64)
        for bits, c in counts.items():
            if len(bits) != q:
                raise ConfigError(f"bit string {bits!r} has wrong length for {q} qubits")
            arr[bit_index(bits)] += int(c)
        return cls(q, arr)

    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots


def sample(dist: np.ndarray, shots: int, seed: int) -> ShotRecord:
    if shots < 1:
        raise ConfigError("shot count must be at least 1")
    p = np.clip(np.asarray(dist, dtype=float), 0.0, None)
    p = p / p.sum()
    q = int(round(math.log2(len(p))))
    counts = make_rng(seed).multinomial(shots, p)
    return ShotRecord(q, counts.astype(np.int64))


@dataclass(frozen=True)
class NoiseModel:
    """Independent per-qubit readout flips: ``p01`` is P(read 1 | 0), ``p10`` is P(read 0 | 1)."""

    p01: tuple[float, ...]
    p10: tuple[float, ...]

    def __post_init__(self):
        if len(self.p01) != len(self.p10):
            raise ConfigError("p01 and p10 must have one entry per qubit")
        for v in self.p01 + self.p10:
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"flip probability {v} outside [0, 1]")

    @classmethod
    def symmetric(cls, q: int, p: float) -> "NoiseModel":
        return cls((p,) * q, (p,) * q)

    @property
    def q(self) -> int:
        return len(self.p01)


def apply_noise(record: ShotRecord, noise: NoiseModel, seed: int) -> ShotRecord:
    q = record.q
    if noise.q != q:
        raise ConfigError(f"noise model covers {noise.q} qubits, record has {q}")
    shots = np.repeat(np.arange(2**q), record.counts)
    bits = (shots[:, None] >> np.arange(q)) & 1
    p_flip = np.where(bits == 1, np.asarray(noise.p10), np.asarray(noise.p01))
    flips = make_rng(seed).random(bits.shape) < p_flip
    bits ^= flips
    idx = (bits << np.arange(q)).sum(axis=1)
    return ShotRecord(q, np.bincount(idx, minlength=2**q).astype(np.int64))


@dataclass(frozen=True)
class CalibrationMatrix:
    """Per-qubit column-stochastic readout matrices ``M[j][read, prepared]``."""

    matrices: tuple[np.ndarray, ...]

    @property
    def q(self) -> int:
        return len(self.matrices)


def exact_calibration(noise: NoiseModel) -> CalibrationMatrix:
    mats = tuple(
        np.array([[1 - a, b], [a, 1 - b]], dtype=float) for a, b in zip(noise.p01, noise.p10)
    )
    return CalibrationMatrix(mats)


def calibrate(noise: NoiseModel, shots: int | None, seed: int) -> CalibrationMatrix:
    """Estimate per-qubit readout matrices from all-zeros and all-ones preparations.

    ``shots=None`` returns the exact matrices of ``noise``.
    """
    if shots is None:
        return exact_calibration(noise)
    q = noise.q
    zeros = ShotRecord(q, np.bincount([0], minlength=2**q).astype(np.int64) * shots)
    ones = ShotRecord(q, np.bincount([2**q - 1], minlength=2**q).astype(np.int64) * shots)
    r0 = apply_noise(zeros, noise, seed)
    r1 = apply_noise(ones, noise, seed + 1)
    mats = []
    idx = np.arange(2**q)
    for j in range(q):
        bit = (idx >> j) & 1
        p01 = r0.counts[bit == 1].sum() / shots
        p10 = r1.counts[bit == 0].sum() / shots
        mats.append(np.array([[1 - p01, p10], [p01, 1 - p10]], dtype=float))
    return CalibrationMatrix(tuple(mats))


def _apply_per_qubit(vec: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    q = len(mats)
    t = vec.reshape((2,) * q)
    for j, m in enumerate(mats):
        ax = q - 1 - j
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [ax])), 0, ax)
    return t.reshape(-1)


def mitigate(record: ShotRecord, cal: CalibrationMatrix) -> np.ndarray:
    """Invert the tensored readout model, clip negative quasi-probabilities and renormalize."""
    if cal.q != record.q:
        raise ConfigError("calibration and record qubit counts differ")
    invs = []
    for j, m in enumerate(cal.matrices):
        if abs(np.linalg.det(m)) < 1e-12:
            raise MitigationError(f"readout matrix of qubit {j} is singular")
        invs.append(np.linalg.inv(m))
    quasi = _apply_per_qubit(record.frequencies(), invs)
    return clip_renormalize(quasi)


def clip_renormalize(quasi: np.ndarray) -> np.ndarray:
    out = np.clip(np.asarray(quasi, dtype=float), 0.0, None)
    total = out.sum()
    if not total > 0:
        raise MitigationError("mitigated distribution has no positive mass")
    return out / total


# ---------------------------------------------------------------------------
# diagonal Hamiltonians


def maxcut_diagonal(q: int, edges: Sequence[Sequence[int]]) -> np.ndarray:
    """Diagonal of sum over edges of (Z_a Z_b - 1)/2, i.e. minus the cut size."""
    idx = np.arange(2**q)
    h = np.zeros(2**q)
    for a, b in edges:
        if not (0 <= a < q and 0 <= b < q):
            raise ConfigError(f"edge ({a}, {b}) outside {q} qubits")
        h -= ((idx >> a) ^ (idx >> b)) & 1
    return h


def energy(psi: Statevector | np.ndarray, diagonal: np.ndarray) -> float:
    p = probabilities(psi)
    if p.shape != np.shape(diagonal):
        raise ConfigError("Hamiltonian dimension does not match the state")
    return float(np.dot(p, diagonal))


# ---------------------------------------------------------------------------
# CSV


def record_to_csv(record: ShotRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bitstring", "count"])
    for i, c in enumerate(record.counts):
        if c:
            w.writerow([bitstring(i, record.q), int(c)])
    return buf.getvalue()


def record_from_csv(text: str) -> ShotRecord:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ConfigError("empty shot record")
    q = len(rows[0]["bitstring"])
    return ShotRecord.from_dict(q, {r["bitstring"]: int(r["count"]) for r in rows})


def distribution_to_csv(dist: np.ndarray) -> str:
    q = int(round(math.log2(len(dist))))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bitstring", "probability"])
    for i, p in enumerate(dist):
        w.writerow([bitstring(i, q), repr(float(p))])
    return buf.getvalue()


def distribution_from_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    q = len(rows[0]["bitstring"])
    out = np.zeros(2**q)
    for r in rows:
        out[bit_index(r["bitstring"])] = float(r["probability"])
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite probability")
    return out
