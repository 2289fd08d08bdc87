"""Density-matrix simulation of the routing circuit with depolarizing noise.

The error rate ``epsilon`` is the per-gate probability entering the
single-qubit channel rho -> (1 - eps) rho + (eps/3)(X rho X + Y rho Y + Z rho Z),
applied after every variational gate to each qubit the gate touches.
Embedding rotations are noiseless unless ``include_embedding_noise`` is set.
Evaluation only: training always runs on the noiseless statevector.
"""

from __future__ import annotations

import numpy as np

from .circuits import CZ, RY, AngleEmbed, CircuitSpec, ry_matrix

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

CZ_MATRIX = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def to_density(state: np.ndarray) -> np.ndarray:
    """rho = |psi><psi| (rank one, trace one)."""
    return np.outer(state, state.conj())


def _n_qubits_of_rho(rho: np.ndarray) -> int:
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    if rho.shape != (dim, dim) or dim != 2**n:
        raise ValueError(f"density matrix has shape {rho.shape}, expected square power-of-two")
    return n


def apply_unitary(rho: np.ndarray, mat: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    """Conjugate rho by a k-qubit unitary acting on ``qubits``: U rho U^dag."""
    n = _n_qubits_of_rho(rho)
    k = len(qubits)
    if mat.shape != (2**k, 2**k):
        raise ValueError(f"unitary shape {mat.shape} does not match {k} qubits")
    mat_t = mat.reshape([2] * (2 * k))
    t = rho.reshape([2] * (2 * n))
    out_axes = list(range(k, 2 * k))
    # ket side: contract U over the row axes of rho
    t = np.tensordot(mat_t, t, axes=(out_axes, list(qubits)))
    t = np.moveaxis(t, range(k), qubits)
    # bra side: contract conj(U) over the column axes
    bra_axes = [n + q for q in qubits]
    t = np.tensordot(mat_t.conj(), t, axes=(out_axes, bra_axes))
    t = np.moveaxis(t, range(k), bra_axes)
    dim = 2**n
    return np.ascontiguousarray(t).reshape(dim, dim)


def depolarize(rho: np.ndarray, qubit: int, epsilon: float) -> np.ndarray:
    """Single-qubit depolarizing channel at error probability epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon == 0.0:
        return rho
    mixed = sum(apply_unitary(rho, p, (qubit,)) for p in (PAULI_X, PAULI_Y, PAULI_Z))
    return (1.0 - epsilon) * rho + (epsilon / 3.0) * mixed


def apply_gate_noisy(rho: np.ndarray, mat: np.ndarray, qubits: tuple[int, ...], epsilon: float) -> np.ndarray:
    """U rho U^dag followed by depolarization of every qubit the gate touches."""
    rho = apply_unitary(rho, mat, qubits)
    for q in qubits:
        rho = depolarize(rho, q, epsilon)
    return rho


def run_circuit_noisy(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    epsilon: float,
    include_embedding_noise: bool = False,
) -> np.ndarray:
    """Basis-state probabilities of the circuit with per-gate depolarizing noise."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    params = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    if params.shape != (spec.n_params,):
        raise ValueError(f"params has shape {params.shape}, expected ({spec.n_params},)")
    if x.shape != (spec.n_qubits,):
        raise ValueError(f"feature vector has shape {x.shape}, expected ({spec.n_qubits},)")
    dim = 2**spec.n_qubits
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for gate in spec.gate_plan:
        if isinstance(gate, AngleEmbed):
            q = gate.feature_index
            if include_embedding_noise:
                rho = apply_gate_noisy(rho, ry_matrix(x[q]), (q,), epsilon)
            else:
                rho = apply_unitary(rho, ry_matrix(x[q]), (q,))
        elif isinstance(gate, RY):
            rho = apply_gate_noisy(rho, ry_matrix(params[gate.param_index]), (gate.qubit,), epsilon)
        elif isinstance(gate, CZ):
            rho = apply_gate_noisy(rho, CZ_MATRIX, (gate.control, gate.target), epsilon)
    return np.real(np.diag(rho)).copy()
