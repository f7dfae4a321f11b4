"""Experiment models: quantum-kernel SVM, QNN classifier, QGAN generator and QAOA.

Each model exposes a value over coalition games so that gate attributions
can be computed with :mod:`qshap.shapley`.
"""

from __future__ import annotations

import io
import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .circuit import Circuit, CoalitionGame, circuit_from_config, gate
from .errors import ConfigError, NumericError
from .rng import derive_seed, make_rng
from .simulator import maxcut_diagonal, probabilities, simulate
from .value_functions import HellingerConfig, accuracy_value, energy_value, hellinger_fidelity

TWO_PI = 2.0 * math.pi


def load_data(name: str) -> dict:
    """Parsed JSON document shipped in ``qshap/data``."""
    return json.loads(resources.files("qshap.data").joinpath(name).read_text())


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    role: str = "train"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if x.ndim != 2 or len(x) != len(y):
            raise ConfigError("dataset needs an (n, k) feature array and n labels")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("labels must be 0 or 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    def to_csv(self) -> str:
        lines = ["x1,x2,label"]
        lines += [f"{a!r},{b!r},{int(c)}" for (a, b), c in zip(self.x.tolist(), self.y.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, role: str = "train") -> "Dataset":
        arr = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        return cls(arr[:, :2], arr[:, 2].astype(np.int64), role)


@dataclass(frozen=True)
class SplitData:
    train: Dataset
    test: Dataset


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    qm, r = np.linalg.qr(z)
    return qm * (np.diag(r) / np.abs(np.diag(r)))


def _balanced_draw(rng, score, n_per_class, gap, budget, draw):
    xs = {0: [], 1: []}
    for _ in range(budget):
        x = draw(rng)
        f = score(x)
        label = 1 if f >= gap else 0 if f <= -gap else None
        if label is not None and len(xs[label]) < n_per_class:
            xs[label].append(x)
        if len(xs[0]) == n_per_class and len(xs[1]) == n_per_class:
            pts = np.array(xs[0] + xs[1])
            labels = np.array([0] * n_per_class + [1] * n_per_class)
            order = rng.permutation(len(labels))
            return pts[order], labels[order]
    raise ConfigError(f"could not reach {n_per_class} points per class within {budget} draws")


def havlicek_labeler(seed: int, r: int = 2):
    """Score x -> <psi(x)| V^dag (Z x Z) V |psi(x)> with a seeded Haar V."""
    v = haar_unitary(4, make_rng(derive_seed(seed, "observable")))
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    obs = v.conj().T @ zz @ v
    fmap = feature_map(r)

    def score(x):
        psi = simulate(fmap, np.atleast_2d(x))
        return np.real(np.einsum("bi,ij,bj->b", psi.conj(), obs, psi))

    return score


def make_dataset(kind: str, seed: int, sizes=(40, 1000), gap: float = 0.3, budget: int = 200_000):
    """Synthetic data.

    ``havlicek-like`` returns a balanced :class:`SplitData` on (0, 2pi]^2
    labelled by a random-observable threshold with separation ``gap``;
    ``qnn-toy`` returns one balanced :class:`Dataset` on [-1, 1]^2 labelled
    by the shipped linear rule.
    """
    rng = make_rng(derive_seed(seed, kind))
    if kind == "havlicek-like":
        n_train, n_test = sizes
        if n_train % 2 or n_test % 2:
            raise ConfigError("dataset sizes must be even for balanced classes")
        score = havlicek_labeler(seed)

        def batch_score(x):
            return float(score(x)[0])

        def draw(g):
            return TWO_PI - g.uniform(0.0, TWO_PI, 2)

        xtr, ytr = _balanced_draw(rng, batch_score, n_train // 2, gap, budget, draw)
        xte, yte = _balanced_draw(rng, batch_score, n_test // 2, gap, budget, draw)
        return SplitData(Dataset(xtr, ytr, "train"), Dataset(xte, yte, "test"))
    if kind == "qnn-toy":
        n = sizes if isinstance(sizes, int) else 20
        rule = load_data("qnn.json")["data_rule"]
        w = np.asarray(rule["w"], dtype=float)
        b = float(rule["b"])
        margin = float(rule.get("margin", 0.1))

        def draw(g):
            return g.uniform(-1.0, 1.0, 2)

        x, y = _balanced_draw(rng, lambda p: float(w @ p + b), n // 2, margin, budget, draw)
        return Dataset(x, y, "train")
    raise ConfigError(f"unknown dataset kind {kind!r}")


# ---------------------------------------------------------------------------
# quantum kernel SVM


def feature_map(r: int) -> Circuit:
    """Two-qubit second-order Z feature map with ``r`` repetitions of 7 gates."""
    if r < 1:
        raise ConfigError("feature map needs r >= 1")
    rep = [
        gate("H", 0), gate("P", 0, param="2*x[0]"),
        gate("H", 1), gate("P", 1, param="2*x[1]"),
        gate("CX", 0, 1), gate("P", 1, param="2*(pi - x[0])*(pi - x[1])"), gate("CX", 0, 1),
    ]
    return Circuit(2, tuple(rep * r), p=0, k=2)


def qsvm_game(r: int) -> CoalitionGame:
    return CoalitionGame.all_active(feature_map(r))


def kernel_matrix(circuit: Circuit, x1, x2=None, theta=None) -> np.ndarray:
    """K[a, b] = |<psi(x2_b)|psi(x1_a)>|^2; symmetric with unit diagonal when ``x2`` is omitted."""
    s1 = simulate(circuit, np.atleast_2d(x1), theta)
    if x2 is None:
        k = np.abs(s1.conj() @ s1.T) ** 2
        k = 0.5 * (k + k.T)
        np.fill_diagonal(k, 1.0)
    else:
        s2 = simulate(circuit, np.atleast_2d(x2), theta)
        k = np.abs(s1 @ s2.conj().T) ** 2
    return np.clip(k, 0.0, 1.0)


def kernel_entry(circuit: Circuit, x1, x2, theta=None) -> float:
    return float(kernel_matrix(circuit, [x1], [x2], theta)[0, 0])


@dataclass(frozen=True)
class SvmModel:
    alpha: np.ndarray
    bias: float
    y_signed: np.ndarray
    C: float
    iterations: int

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)


def train_svm(K: np.ndarray, labels, C: float = 1.0, tol: float = 1e-6, max_iter: int = 100_000) -> SvmModel:
    """Dual SVM by SMO with maximal-violating-pair selection.

    Deterministic: ties in pair selection go to the lowest index.
    """
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix has non-finite entries")
    y = 2.0 * np.asarray(labels, dtype=float) - 1.0
    n = len(y)
    if K.shape != (n, n):
        raise ConfigError("kernel matrix shape does not match labels")
    if C <= 0:
        raise ConfigError("C must be positive")
    Q = y[:, None] * y[None, :] * K
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] < tol:
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Q[i, i] + Q[j, j] + 2 * Q[i, j], 1e-12)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(Q[i, i] + Q[j, j] - 2 * Q[i, j], 1e-12)
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        grad += Q[:, i] * (alpha[i] - ai) + Q[:, j] * (alpha[j] - aj)
        it += 1
    score = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(np.mean(score[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = np.max(score[up]) if up.any() else 0.0
        lo = np.min(score[low]) if low.any() else 0.0
        bias = float((hi + lo) / 2)
    return SvmModel(alpha, bias, y, C, it)


def decision_function(model: SvmModel, K_rows: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i K(x, x_i) + b for kernel rows of shape (m, n_train)."""
    return np.asarray(K_rows) @ (model.alpha * model.y_signed) + model.bias


def predict(model: SvmModel, K_rows: np.ndarray) -> np.ndarray:
    return (decision_function(model, K_rows) > 0).astype(np.int64)


def qsvm_value(game: CoalitionGame, s: int, data: SplitData, C: float = 1.0) -> float:
    """Test accuracy of an SVM retrained on the coalition's kernel."""
    sub = game.subcircuit(s)
    states_tr = simulate(sub, data.train.x)
    states_te = simulate(sub, data.test.x)
    k_tr = np.abs(states_tr.conj() @ states_tr.T) ** 2
    k_tr = 0.5 * (k_tr + k_tr.T)
    np.fill_diagonal(k_tr, 1.0)
    k_te = np.abs(states_te.conj() @ states_tr.T) ** 2
    model = train_svm(k_tr, data.train.y, C)
    return accuracy_value(predict(model, k_te), data.test.y)


# ---------------------------------------------------------------------------
# QNN


def qnn_game() -> tuple[CoalitionGame, np.ndarray]:
    doc = load_data("qnn.json")
    circuit = circuit_from_config(doc["circuit"])
    rest = set(doc["remaining"])
    active = tuple(g for g in range(1, len(circuit) + 1) if g not in rest)
    return CoalitionGame(circuit, active), np.asarray(doc["theta"], dtype=float)


def qnn_probabilities(game: CoalitionGame, s: int, x, theta, wire: int = 0) -> np.ndarray:
    """P(measured bit of ``wire`` is 1) per data point."""
    probs = probabilities(simulate(game.subcircuit(s), x, theta))
    idx = np.arange(probs.shape[1])
    return probs[:, (idx >> wire) & 1 == 1].sum(axis=1)


def qnn_value(game: CoalitionGame, s: int, data: Dataset, theta, seed: int, wire: int = 0) -> float:
    """One-shot accuracy: one measurement of ``wire`` per point is the predicted label."""
    p1 = qnn_probabilities(game, s, data.x, theta, wire)
    bits = (make_rng(derive_seed(seed, "qnn-shots")).random(len(p1)) < p1).astype(np.int64)
    return accuracy_value(bits, data.y)


def qnn_expected_value(game: CoalitionGame, s: int, data: Dataset, theta, wire: int = 0) -> float:
    p1 = qnn_probabilities(game, s, data.x, theta, wire)
    return float(np.mean(np.where(data.y == 1, p1, 1.0 - p1)))


# ---------------------------------------------------------------------------
# QGAN


def qgan_game() -> tuple[CoalitionGame, np.ndarray]:
    doc = load_data("qgan.json")
    circuit = circuit_from_config(doc["circuit"])
    rest = set(doc["remaining"])
    active = tuple(g for g in range(1, len(circuit) + 1) if g not in rest)
    return CoalitionGame(circuit, active), np.asarray(doc["theta"], dtype=float)


def qgan_value(game: CoalitionGame, s: int, theta, cfg: HellingerConfig, seed: int | None = None) -> float:
    return hellinger_fidelity(game, s, cfg, None, theta, seed)


def lognormal_target(mu: float = 1.0, sigma: float = 1.0, bins: int = 8) -> np.ndarray:
    """Log-normal density evaluated on 0..bins-1 and renormalized (zero at 0)."""
    j = np.arange(bins, dtype=float)
    dens = np.zeros(bins)
    pos = j > 0
    dens[pos] = np.exp(-((np.log(j[pos]) - mu) ** 2) / (2 * sigma**2)) / (j[pos] * sigma * math.sqrt(2 * math.pi))
    return dens / dens.sum()


# ---------------------------------------------------------------------------
# QAOA


@dataclass(frozen=True)
class MaxCutGraph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple(sorted(tuple(sorted((int(a), int(b)))) for a, b in self.edges))
        if len(set(edges)) != len(edges) or any(a == b for a, b in edges):
            raise ConfigError("max-cut graph must be simple")
        for a, b in edges:
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices):
                raise ConfigError(f"edge ({a}, {b}) outside {self.n_vertices} vertices")
        object.__setattr__(self, "edges", edges)

    def to_json(self) -> dict:
        return {"vertices": self.n_vertices, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, doc: dict) -> "MaxCutGraph":
        try:
            return cls(int(doc["vertices"]), tuple(map(tuple, doc["edges"])))
        except KeyError as exc:
            raise ConfigError(f"graph document missing field {exc}") from exc


def shipped_graph() -> MaxCutGraph:
    return MaxCutGraph.from_json(load_data("maxcut_graph.json"))


def cut_value(graph: MaxCutGraph, assignment: int) -> int:
    return sum(((assignment >> a) ^ (assignment >> b)) & 1 for a, b in graph.edges)


def brute_force_maxcut(graph: MaxCutGraph) -> tuple[int, list[int]]:
    """Maximum cut and every assignment (bitmask, vertex v = bit v) reaching it."""
    cuts = -maxcut_diagonal(graph.n_vertices, graph.edges)
    best = int(cuts.max())
    return best, [int(i) for i in np.flatnonzero(cuts == best)]


def find_unique_maxcut_graph(n: int = 7, m: int = 10, cut: int = 9, seed: int = 0, budget: int = 100_000) -> MaxCutGraph:
    """Seeded search for a connected graph whose max cut is ``cut`` and unique up to complement."""
    rng = make_rng(derive_seed(seed, "graph-search"))
    pairs = list(itertools.combinations(range(n), 2))
    for _ in range(budget):
        pick = rng.choice(len(pairs), size=m, replace=False)
        graph = MaxCutGraph(n, tuple(pairs[i] for i in sorted(pick)))
        best, opt = brute_force_maxcut(graph)
        if best == cut and len(opt) == 2 and _connected(graph):
            return graph
    raise ConfigError("no graph with the requested cut structure found")


def _connected(graph: MaxCutGraph) -> bool:
    seen, stack = {0}, [0]
    while stack:
        u = stack.pop()
        for a, b in graph.edges:
            for s, t in ((a, b), (b, a)):
                if s == u and t not in seen:
                    seen.add(t)
                    stack.append(t)
    return len(seen) == graph.n_vertices


def qaoa_circuit(graph: MaxCutGraph, r: int) -> Circuit:
    """H on every vertex, then ``r`` (cost, mixing) layer pairs using theta[2i], theta[2i+1]."""
    if r < 1:
        raise ConfigError("QAOA depth must be at least 1")
    gates = [gate("H", v) for v in range(graph.n_vertices)]
    for i in range(r):
        gates.append(gate("LayerRef", param=f"theta[{2 * i}]", layer="cost"))
        gates.append(gate("LayerRef", param=f"theta[{2 * i + 1}]", layer="mix"))
    return Circuit(graph.n_vertices, tuple(gates), p=2 * r, k=0)


def qaoa_game(graph: MaxCutGraph, r: int) -> CoalitionGame:
    circuit = qaoa_circuit(graph, r)
    n = graph.n_vertices
    return CoalitionGame(circuit, tuple(range(n + 1, n + 2 * r + 1)), graph.edges)


@dataclass(frozen=True)
class OptimizerConfig:
    maxiter: int = 500
    restarts: int = 3
    rhobeg: float = 0.5
    tol: float = 1e-8


@dataclass
class QaoaResult:
    theta: np.ndarray
    energy: float
    cut: int
    bitstring: int
    evaluations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def optimize_qaoa(graph: MaxCutGraph, r: int, cfg: OptimizerConfig = OptimizerConfig(), seed: int = 0) -> QaoaResult:
    """Minimize the grand-coalition energy with COBYLA from seeded random starts.

    The best restart (lowest energy) wins; ``converged`` is False when any
    restart ran into the evaluation budget.
    """
    from scipy.optimize import minimize

    game = qaoa_game(graph, r)
    grand = game.grand

    def f(theta):
        return energy_value(game, grand, theta)

    best = None
    evaluations = 0
    converged = True
    for k in range(cfg.restarts):
        x0 = make_rng(derive_seed(seed, "qaoa-start", k)).uniform(0.0, TWO_PI, 2 * r)
        res = minimize(f, x0, method="COBYLA", tol=cfg.tol,
                       options={"maxiter": cfg.maxiter, "rhobeg": cfg.rhobeg})
        evaluations += int(res.nfev)
        converged &= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    theta = np.asarray(best.x, dtype=float)
    circuit = game.primitive_subcircuit(grand)
    probs = probabilities(simulate(circuit, None, theta)[0])
    top = int(np.argmax(probs))
    return QaoaResult(theta, float(best.fun), cut_value(graph, top), top, evaluations, converged)
