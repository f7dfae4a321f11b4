"""Value functions that score a coalition of gates.

Every ``*_value`` helper here takes a :class:`~qshap.circuit.CoalitionGame`
and a coalition mask and returns a float; :func:`make_value_function` wraps
them into a :class:`~qshap.shapley.ValueFunctionSpec` addressable by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import CoalitionGame
from .errors import ConfigError
from .rng import derive_seed, make_rng
from .shapley import ValueFunctionSpec
from .simulator import (
    NoiseModel,
    apply_noise,
    calibrate,
    maxcut_diagonal,
    mitigate,
    probabilities,
    sample,
    simulate,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class ExpressibilityConfig:
    """Settings of the fidelity-histogram expressibility estimate.

    ``seed=None`` makes the value function uncertain (fresh parameter pairs
    per job seed); an integer fixes the draws across coalitions.
    """

    c_p: int = 5000
    c_b: int = 75
    mode: str = "exact"  # "exact" or "swap"
    shots: int = 1000
    low: float = 0.0
    high: float = TWO_PI
    squared_fidelity: bool = False
    seed: int | None = 0

    def __post_init__(self):
        if self.c_p < 1 or self.c_b < 1:
            raise ConfigError("c_p and c_b must be at least 1")
        if self.mode not in ("exact", "swap"):
            raise ConfigError(f"unknown expressibility mode {self.mode!r}")
        if self.mode == "swap" and self.shots < 1:
            raise ConfigError("swap mode needs at least one shot")
        if not self.high > self.low:
            raise ConfigError("empty parameter domain")


@dataclass(frozen=True)
class EntanglingConfig:
    c_s: int = 1000
    low: float = 0.0
    high: float = TWO_PI
    seed: int | None = 0

    def __post_init__(self):
        if self.c_s < 1:
            raise ConfigError("c_s must be at least 1")


@dataclass(frozen=True)
class HellingerConfig:
    """Shot sampling with readout noise; ``calibration_shots=None`` uses the exact readout matrices."""

    shots: int = 10_000
    noise: NoiseModel | None = None
    mitigation: bool = False
    calibration_shots: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.shots < 1:
            raise ConfigError("shots must be at least 1")


# ---------------------------------------------------------------------------
# expressibility


def haar_bin_masses(q: int, c_b: int) -> np.ndarray:
    """Haar probability of each fidelity bin, integrated exactly over the bin."""
    d = 2**q
    edges = np.arange(c_b + 1) / c_b
    cdf_tail = (1.0 - edges) ** (d - 1)
    return cdf_tail[:-1] - cdf_tail[1:]


def fidelity_histogram(fidelities: np.ndarray, c_b: int) -> np.ndarray:
    """Normalized histogram on ``c_b`` equal bins of [0, 1]; F = 1 lands in the last bin."""
    f = np.clip(np.asarray(fidelities, dtype=float), 0.0, 1.0)
    idx = np.minimum(np.floor(f * c_b).astype(np.int64), c_b - 1)
    counts = np.bincount(idx, minlength=c_b)
    return counts / counts.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with the convention 0 log(0/q) = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def swap_fidelity(fidelity: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot estimate with P(1) = 1/2 - F/2 and F = 1 - 2 ones / shots, clipped to [0, 1]."""
    p1 = np.clip(0.5 - 0.5 * np.asarray(fidelity), 0.0, 1.0)
    ones = rng.binomial(shots, p1)
    return np.clip(1.0 - 2.0 * ones / shots, 0.0, 1.0)


def _param_draws(rng, n, p, low, high):
    return rng.uniform(low, high, size=(n, p)) if p else np.zeros((1, 0))


def expressibility_eta(circuit, cfg: ExpressibilityConfig, x=None, seed: int | None = None) -> float:
    """KL divergence between the circuit's fidelity histogram and the Haar one."""
    seed = cfg.seed if seed is None else seed
    rng = make_rng(derive_seed(0 if seed is None else seed, "expressibility"))
    x = np.zeros(circuit.k) if x is None else np.asarray(x, dtype=float)
    t1 = _param_draws(rng, cfg.c_p, circuit.p, cfg.low, cfg.high)
    t2 = _param_draws(rng, cfg.c_p, circuit.p, cfg.low, cfg.high)
    psi1 = simulate(circuit, x, t1)
    psi2 = simulate(circuit, x, t2)
    overlap = np.abs(np.sum(psi1.conj() * psi2, axis=1))
    f = overlap**2 if cfg.squared_fidelity else overlap
    f = np.broadcast_to(f, (cfg.c_p,))
    if cfg.mode == "swap":
        f = swap_fidelity(f, cfg.shots, rng)
    hist = fidelity_histogram(f, cfg.c_b)
    return kl_divergence(hist, haar_bin_masses(circuit.q, cfg.c_b))


def expressibility(game: CoalitionGame, s: int, cfg: ExpressibilityConfig = ExpressibilityConfig(),
                   x=None, seed: int | None = None) -> float:
    """Value -eta of the coalition subcircuit (higher is more expressive)."""
    return -expressibility_eta(game.primitive_subcircuit(s), cfg, x, seed)


# ---------------------------------------------------------------------------
# entangling capability


def generalized_distance(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """D(u, v) = 1/2 sum_{a,b} |u_a v_b - u_b v_a|^2, batched over the leading axis."""
    wedge = u[:, :, None] * v[:, None, :] - u[:, None, :] * v[:, :, None]
    return 0.5 * np.sum(np.abs(wedge) ** 2, axis=(1, 2))


def _iota(states: np.ndarray, q: int, j: int, b: int) -> np.ndarray:
    """Project wire ``j`` onto ``|b>`` and delete it."""
    t = states.reshape((states.shape[0],) + (2,) * q)
    return np.take(t, b, axis=q - j).reshape(states.shape[0], -1)


def meyer_wallach(states: np.ndarray, q: int) -> np.ndarray:
    """Q = (4/q) sum_j D(iota_j(0) psi, iota_j(1) psi) for a batch of statevectors."""
    states = np.atleast_2d(states)
    if q < 2:
        return np.zeros(states.shape[0])
    total = np.zeros(states.shape[0])
    for j in range(q):
        total += generalized_distance(_iota(states, q, j, 0), _iota(states, q, j, 1))
    return 4.0 / q * total


def meyer_wallach_purity(states: np.ndarray, q: int) -> np.ndarray:
    """Q = 2 (1 - (1/q) sum_j Tr rho_j^2); used as a cross-check."""
    states = np.atleast_2d(states)
    B = states.shape[0]
    t = states.reshape((B,) + (2,) * q)
    purity = np.zeros(B)
    for j in range(q):
        ax = q - j
        m = np.moveaxis(t, ax, 1).reshape(B, 2, -1)
        rho = m @ m.conj().transpose(0, 2, 1)
        purity += np.real(np.einsum("bij,bji->b", rho, rho))
    return 2.0 * (1.0 - purity / q)


def entangling_capability(game: CoalitionGame, s: int, cfg: EntanglingConfig = EntanglingConfig(),
                          x=None, seed: int | None = None, chunk: int = 256) -> float:
    circuit = game.primitive_subcircuit(s)
    if circuit.q < 2:
        return 0.0
    seed = cfg.seed if seed is None else seed
    rng = make_rng(derive_seed(0 if seed is None else seed, "entangling"))
    x = np.zeros(circuit.k) if x is None else np.asarray(x, dtype=float)
    theta = _param_draws(rng, cfg.c_s, circuit.p, cfg.low, cfg.high)
    values = []
    for start in range(0, theta.shape[0], chunk):
        states = simulate(circuit, x, theta[start:start + chunk])
        values.append(meyer_wallach(states, circuit.q))
    q_all = np.concatenate(values)
    # a parameter-free circuit yields a single state
    return float(np.clip(np.mean(q_all), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Hellinger fidelity


def hellinger(p: np.ndarray, q: np.ndarray) -> float:
    """(sum_b sqrt(p_b q_b))^2; exactly 1 for identical inputs."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.array_equal(p, q):
        return 1.0
    bc = float(np.sum(np.sqrt(p * q)))
    return min(bc * bc, 1.0)


def noisy_distribution(dist: np.ndarray, cfg: HellingerConfig, seed: int) -> np.ndarray:
    record = sample(dist, cfg.shots, derive_seed(seed, "shots"))
    if cfg.noise is not None:
        record = apply_noise(record, cfg.noise, derive_seed(seed, "readout"))
        if cfg.mitigation:
            cal = calibrate(cfg.noise, cfg.calibration_shots, derive_seed(seed, "calibration"))
            return mitigate(record, cal)
    return record.frequencies()


def hellinger_fidelity(game: CoalitionGame, s: int, cfg: HellingerConfig, x=None, theta=None,
                       seed: int | None = None) -> float:
    circuit = game.primitive_subcircuit(s)
    seed = cfg.seed if seed is None else seed
    exact = probabilities(simulate(circuit, x, theta)[0])
    measured = noisy_distribution(exact, cfg, 0 if seed is None else seed)
    return hellinger(measured, exact)


# ---------------------------------------------------------------------------
# accuracy, energy, execution efficiency


def accuracy_value(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ConfigError("predictions and labels differ in length")
    if predictions.size == 0:
        raise ConfigError("accuracy of an empty prediction set")
    return float(np.mean(predictions == labels))


def energy_value(game: CoalitionGame, s: int, theta, graph=None) -> float:
    """Expectation of the max-cut Hamiltonian in the coalition subcircuit's state."""
    graph = game.graph if graph is None else graph
    if graph is None:
        raise ConfigError("energy value needs a graph")
    sub = game.subcircuit(s)
    from .circuit import expand_layers

    circuit = expand_layers(sub, graph) if sub.has_layers else sub
    diag = maxcut_diagonal(circuit.q, graph)
    probs = probabilities(simulate(circuit, None, theta)[0])
    return float(np.dot(probs, diag))


def execution_efficiency(game: CoalitionGame, s: int, target, s1: float = -1.0, s2: float = -10.0,
                         trials: int = 50, seed: int = 0, x=None, theta=None) -> float:
    """Best penalty over ``trials`` seeded transpilations of the coalition subcircuit."""
    from .transpiler import best_of_trials

    circuit = game.primitive_subcircuit(s)
    return best_of_trials(circuit, target, s1, s2, trials, seed, x=x, theta=theta)[0]


# ---------------------------------------------------------------------------
# registry


def _opt(params: dict, key: str, default):
    return params.get(key, default)


def make_value_function(name: str, game: CoalitionGame, params: dict | None = None, **context) -> ValueFunctionSpec:
    """Build a named value function over ``game``.

    ``context`` carries experiment objects (datasets, theta, targets).
    """
    params = dict(params or {})
    x = context.get("x")
    theta = context.get("theta")
    if name == "expressibility":
        cfg = ExpressibilityConfig(**params)
        return ValueFunctionSpec(name, lambda m, sd: expressibility(game, m, cfg, x, None if cfg.seed is not None else sd),
                                 deterministic=cfg.seed is not None)
    if name == "entangling":
        cfg = EntanglingConfig(**params)
        return ValueFunctionSpec(name, lambda m, sd: entangling_capability(game, m, cfg, x, None if cfg.seed is not None else sd),
                                 deterministic=cfg.seed is not None)
    if name == "hellinger":
        cfg = hellinger_config_from(params, game.circuit.q)
        return ValueFunctionSpec(name, lambda m, sd: hellinger_fidelity(game, m, cfg, x, theta, sd))
    if name == "energy":
        if theta is None:
            raise ConfigError("energy value needs theta")
        return ValueFunctionSpec(name, lambda m, sd: energy_value(game, m, theta), deterministic=True)
    if name == "exec_efficiency":
        from .transpiler import load_target

        target = load_target(context.get("target", params.get("target", "oslo")))
        s1 = float(_opt(params, "s1", -1.0))
        s2 = float(_opt(params, "s2", -10.0))
        trials = int(_opt(params, "trials", 50))
        seed = int(_opt(params, "seed", 0))
        return ValueFunctionSpec(
            name, lambda m, sd: execution_efficiency(game, m, target, s1, s2, trials, seed, x, theta), deterministic=True
        )
    if name == "accuracy_qsvm":
        from .models import qsvm_value

        data = context["data"]
        C = float(_opt(params, "C", 1.0))
        return ValueFunctionSpec(name, lambda m, sd: qsvm_value(game, m, data, C), deterministic=True)
    if name == "accuracy_qnn":
        from .models import qnn_value

        data = context["data"]
        if theta is None:
            raise ConfigError("accuracy_qnn needs theta")
        return ValueFunctionSpec(name, lambda m, sd: qnn_value(game, m, data, theta, sd))
    raise ConfigError(f"unknown value function {name!r}")


def hellinger_config_from(params: dict, q: int) -> HellingerConfig:
    params = dict(params)
    flip = params.pop("flip", None)
    p01 = params.pop("p01", None)
    p10 = params.pop("p10", None)
    noise = None
    if flip is not None:
        noise = NoiseModel.symmetric(q, float(flip))
    elif p01 is not None or p10 is not None:
        if p01 is None or p10 is None:
            raise ConfigError("noise needs both p01 and p10")
        noise = NoiseModel(tuple(map(float, p01)), tuple(map(float, p10)))
    return HellingerConfig(noise=noise, **params)


VALUE_FUNCTION_NAMES = (
    "expressibility", "entangling", "hellinger", "energy", "accuracy_qsvm", "accuracy_qnn", "exec_efficiency",
)
