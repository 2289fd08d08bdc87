"""Dense statevector simulation of the angle-embedding routing circuit.

Conventions used throughout the package:

* A pure state over ``n`` qubits is a length ``2**n`` complex vector of
  amplitudes. Qubit 0 is the *most significant* bit of the basis index,
  so reshaping to ``[2] * n`` puts qubit ``j`` on axis ``j``.
* All operations are pure functions: they never mutate their inputs and
  are safe to call concurrently.

The circuit family is fixed: one angle-embedding stage (a Y-rotation per
qubit by the corresponding feature value) followed by layers of trainable
Y-rotations and a chain of CZ gates between adjacent qubits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AngleEmbed:
    """Embedding rotation: RY by feature ``x[feature_index]`` on that qubit."""

    feature_index: int


@dataclass(frozen=True)
class RY:
    """Trainable Y-rotation on ``qubit`` by parameter ``param_index``."""

    qubit: int
    param_index: int


@dataclass(frozen=True)
class CZ:
    """Controlled-Z between two (adjacent) qubits."""

    control: int
    target: int


Gate = AngleEmbed | RY | CZ


@dataclass
class ExecutionTally:
    """Mutable counter for instrumenting circuit cost in tests."""

    circuit_runs: int = 0
    gate_applications: int = 0


@dataclass(frozen=True)
class CircuitSpec:
    """Gate layout of the routing circuit.

    ``gate_plan`` is executed in order by :func:`run_circuit`. The number of
    trainable parameters is ``n_layers * n_qubits``; every RY parameter index
    must appear exactly once and CZ gates may only connect adjacent qubits.
    """

    n_qubits: int
    n_layers: int
    gate_plan: tuple[Gate, ...] = field(default=())

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be nonnegative, got {self.n_layers}")
        n = self.n_qubits
        param_indices = []
        for gate in self.gate_plan:
            if isinstance(gate, AngleEmbed):
                if not 0 <= gate.feature_index < n:
                    raise ValueError(f"embed feature index {gate.feature_index} out of range for {n} qubits")
            elif isinstance(gate, RY):
                if not 0 <= gate.qubit < n:
                    raise ValueError(f"RY qubit {gate.qubit} out of range for {n} qubits")
                param_indices.append(gate.param_index)
            elif isinstance(gate, CZ):
                if not (0 <= gate.control < n and 0 <= gate.target < n):
                    raise ValueError(f"CZ qubits ({gate.control}, {gate.target}) out of range for {n} qubits")
                if abs(gate.control - gate.target) != 1:
                    raise ValueError(f"CZ must connect adjacent qubits, got ({gate.control}, {gate.target})")
            else:
                raise TypeError(f"unknown gate descriptor {gate!r}")
        expected = self.n_layers * self.n_qubits
        if len(param_indices) != expected:
            raise ValueError(
                f"gate plan has {len(param_indices)} RY gates, expected n_layers * n_qubits = {expected}"
            )
        if sorted(param_indices) != list(range(expected)):
            raise ValueError("RY param indices must cover [0, P) exactly once")

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits

    @classmethod
    def layered(cls, n_qubits: int, n_layers: int) -> "CircuitSpec":
        """Standard plan: embed every feature, then per layer RY on every
        qubit followed by the CZ chain (0,1), (1,2), ... in ascending order."""
        plan: list[Gate] = [AngleEmbed(i) for i in range(n_qubits)]
        p = 0
        for _ in range(n_layers):
            for q in range(n_qubits):
                plan.append(RY(q, p))
                p += 1
            for q in range(n_qubits - 1):
                plan.append(CZ(q, q + 1))
        return cls(n_qubits=n_qubits, n_layers=n_layers, gate_plan=tuple(plan))


def n_qubits_of(state: np.ndarray) -> int:
    """Number of qubits of a statevector; validates the power-of-two length."""
    dim = state.shape[0]
    n = dim.bit_length() - 1
    if dim != 2**n:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def ry_matrix_deriv(theta: float) -> np.ndarray:
    """d/dtheta of :func:`ry_matrix`."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return 0.5 * np.array([[-s, -c], [c, -s]], dtype=complex)


def _apply_1q(amps: np.ndarray, mat: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Apply a 2x2 matrix to one qubit of ``amps``, shape (2**n,) or (2**n, k)."""
    batch = amps.shape[1:]
    t = amps.reshape([2] * n + list(batch))
    t = np.moveaxis(t, qubit, 0)
    t = np.tensordot(mat, t, axes=([1], [0]))
    t = np.moveaxis(t, 0, qubit)
    return np.ascontiguousarray(t).reshape(amps.shape)


def cz_signs(n: int, q_a: int, q_b: int) -> np.ndarray:
    """Diagonal of CZ on (q_a, q_b): -1 where both qubits are 1, else +1."""
    b = np.arange(2**n)
    both = ((b >> (n - 1 - q_a)) & 1) & ((b >> (n - 1 - q_b)) & 1)
    return np.where(both == 1, -1.0, 1.0)


def _apply_cz(amps: np.ndarray, q_a: int, q_b: int, n: int) -> np.ndarray:
    signs = cz_signs(n, q_a, q_b)
    if amps.ndim > 1:
        signs = signs.reshape((-1,) + (1,) * (amps.ndim - 1))
    return amps * signs


def angle_embed(x: np.ndarray, n_qubits: int) -> np.ndarray:
    """Product state with qubit i rotated to cos(x_i/2)|0> + sin(x_i/2)|1>."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n_qubits,):
        raise ValueError(f"feature vector has shape {x.shape}, expected ({n_qubits},)")
    state = np.array([1.0 + 0.0j])
    for xi in x:
        qubit = np.array([math.cos(xi / 2.0), math.sin(xi / 2.0)], dtype=complex)
        state = np.kron(state, qubit)
    return state


def apply_ry(state: np.ndarray, qubit: int, theta: float) -> np.ndarray:
    n = n_qubits_of(state)
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} out of range for {n}-qubit state")
    return _apply_1q(state, ry_matrix(theta), qubit, n)


def apply_cz(state: np.ndarray, q_a: int, q_b: int) -> np.ndarray:
    n = n_qubits_of(state)
    if q_a == q_b:
        raise ValueError("CZ qubits must be distinct")
    if not (0 <= q_a < n and 0 <= q_b < n):
        raise ValueError(f"CZ qubits ({q_a}, {q_b}) out of range for {n}-qubit state")
    return _apply_cz(state, q_a, q_b, n)


def _apply_gate(amps: np.ndarray, gate: Gate, params: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    if isinstance(gate, AngleEmbed):
        return _apply_1q(amps, ry_matrix(x[gate.feature_index]), gate.feature_index, n)
    if isinstance(gate, RY):
        return _apply_1q(amps, ry_matrix(params[gate.param_index]), gate.qubit, n)
    return _apply_cz(amps, gate.control, gate.target, n)


def _apply_gate_adjoint(amps: np.ndarray, gate: Gate, params: np.ndarray, x: np.ndarray, n: int) -> np.ndarray:
    if isinstance(gate, AngleEmbed):
        return _apply_1q(amps, ry_matrix(-x[gate.feature_index]), gate.feature_index, n)
    if isinstance(gate, RY):
        return _apply_1q(amps, ry_matrix(-params[gate.param_index]), gate.qubit, n)
    return _apply_cz(amps, gate.control, gate.target, n)


def run_circuit(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    """Execute the gate plan on |0...0> and return the final statevector."""
    params = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"params has shape {params.shape}, expected ({spec.n_params},)")
    if x.shape != (spec.n_qubits,):
        raise ValueError(f"feature vector has shape {x.shape}, expected ({spec.n_qubits},)")
    state = zero_state(spec.n_qubits)
    for gate in spec.gate_plan:
        state = _apply_gate(state, gate, params, x, spec.n_qubits)
    if tally is not None:
        tally.circuit_runs += 1
        tally.gate_applications += len(spec.gate_plan)
    return state


def measure_probabilities(state: np.ndarray) -> np.ndarray:
    """Computational-basis probabilities |amplitude|^2."""
    return np.abs(state) ** 2


def route_probabilities(probs: np.ndarray, n_experts: int, mapping: str = "mod") -> np.ndarray:
    """Marginalize basis-state probabilities onto experts.

    ``mapping="mod"`` sends basis index b to expert b mod n_experts.
    ``mapping="first_k"`` reads the expert index off the first k qubits
    (requires n_experts to be a power of two).
    """
    probs = np.asarray(probs, dtype=float)
    dim = probs.shape[0]
    if not 1 <= n_experts <= dim:
        raise ValueError(f"n_experts must be in [1, {dim}], got {n_experts}")
    groups = outcome_groups(dim, n_experts, mapping)
    out = np.zeros(n_experts)
    np.add.at(out, groups, probs)
    return out


def outcome_groups(dim: int, n_experts: int, mapping: str = "mod") -> np.ndarray:
    """Expert index assigned to each basis outcome, per the chosen mapping."""
    b = np.arange(dim)
    if mapping == "mod":
        return b % n_experts
    if mapping == "first_k":
        k = n_experts.bit_length() - 1
        if 2**k != n_experts:
            raise ValueError("first_k mapping requires n_experts to be a power of two")
        n = dim.bit_length() - 1
        return b >> (n - k)
    raise ValueError(f"unknown outcome mapping {mapping!r}")


def interfere_two_paths(a1: float, phi1: float, a2: float, phi2: float) -> float:
    """|a1 e^{i phi1} + a2 e^{i phi2}|^2 = a1^2 + a2^2 + 2 a1 a2 cos(phi1 - phi2)."""
    return a1**2 + a2**2 + 2.0 * a1 * a2 * math.cos(phi1 - phi2)


def quantum_kernel(spec: CircuitSpec, x: np.ndarray, x_prime: np.ndarray) -> float:
    """Squared overlap of the two embedded states (embedding only)."""
    psi = angle_embed(np.asarray(x, dtype=float), spec.n_qubits)
    psi_prime = angle_embed(np.asarray(x_prime, dtype=float), spec.n_qubits)
    return float(np.abs(np.vdot(psi, psi_prime)) ** 2)
