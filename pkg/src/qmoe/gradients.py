"""Jacobians of circuit outcome probabilities with respect to the trainable angles.

Three interchangeable backends:

* ``adjoint`` -- one forward sweep caching the final state, then one backward
  sweep un-applying gates while accumulating, per outcome projector,
  2 Re <bra| dG/dtheta |ket>. Circuit-execution count is independent of the
  parameter count.
* ``parameter_shift`` -- exact for RY-generated gates,
  dp/dtheta_j = (p(theta_j + pi/2) - p(theta_j - pi/2)) / 2; runs 2P circuits.
* ``finite_diff`` -- central differences, test oracle only.

All return an array of shape (n_outcomes, P); columns sum to zero because the
probabilities sum to one for every theta.
"""

from __future__ import annotations

import math

import numpy as np

from .circuits import (
    RY,
    CircuitSpec,
    ExecutionTally,
    _apply_1q,
    _apply_gate_adjoint,
    measure_probabilities,
    outcome_groups,
    route_probabilities,
    run_circuit,
    ry_matrix_deriv,
)


def _adjoint_jacobian(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    group_of: np.ndarray,
    n_groups: int,
    tally: ExecutionTally | None,
) -> np.ndarray:
    """Jacobian of grouped probabilities via the adjoint backward sweep.

    ``group_of[b]`` assigns basis outcome b to a group; the projector for
    group k is diagonal with ones on its members. The full per-outcome
    Jacobian is the special case of singleton groups.
    """
    params = np.asarray(params, dtype=float)
    x = np.asarray(x, dtype=float)
    n = spec.n_qubits
    psi = run_circuit(spec, params, x, tally=tally)
    # bras[:, k] = Pi_k |psi>, pulled back through the gates after the current one
    bras = np.zeros((psi.shape[0], n_groups), dtype=complex)
    bras[np.arange(psi.shape[0]), group_of] = psi
    ket = psi
    jac = np.zeros((n_groups, spec.n_params))
    for gate in reversed(spec.gate_plan):
        ket = _apply_gate_adjoint(ket, gate, params, x, n)
        if isinstance(gate, RY):
            d_ket = _apply_1q(ket, ry_matrix_deriv(params[gate.param_index]), gate.qubit, n)
            jac[:, gate.param_index] = 2.0 * (bras.conj().T @ d_ket).real
        bras = _apply_gate_adjoint(bras, gate, params, x, n)
        if tally is not None:
            tally.gate_applications += 2
    return jac


def jacobian_adjoint(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    dim = 2**spec.n_qubits
    return _adjoint_jacobian(spec, params, x, np.arange(dim), dim, tally)


def jacobian_parameter_shift(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    jac = np.zeros((2**spec.n_qubits, spec.n_params))
    for j in range(spec.n_params):
        shifted = params.copy()
        shifted[j] = params[j] + math.pi / 2
        p_plus = measure_probabilities(run_circuit(spec, shifted, x, tally=tally))
        shifted[j] = params[j] - math.pi / 2
        p_minus = measure_probabilities(run_circuit(spec, shifted, x, tally=tally))
        jac[:, j] = 0.5 * (p_plus - p_minus)
    return jac


def jacobian_finite_diff(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    step: float = 1e-5,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    params = np.asarray(params, dtype=float)
    jac = np.zeros((2**spec.n_qubits, spec.n_params))
    for j in range(spec.n_params):
        shifted = params.copy()
        shifted[j] = params[j] + step
        p_plus = measure_probabilities(run_circuit(spec, shifted, x, tally=tally))
        shifted[j] = params[j] - step
        p_minus = measure_probabilities(run_circuit(spec, shifted, x, tally=tally))
        jac[:, j] = (p_plus - p_minus) / (2.0 * step)
    return jac


BACKENDS = {
    "adjoint": jacobian_adjoint,
    "parameter_shift": jacobian_parameter_shift,
    "finite_diff": jacobian_finite_diff,
}


def probability_jacobian(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    backend: str = "adjoint",
    step: float = 1e-5,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    """Per-outcome Jacobian through the named backend."""
    if backend not in BACKENDS:
        raise ValueError(f"unknown gradient backend {backend!r}; expected one of {sorted(BACKENDS)}")
    if backend == "finite_diff":
        return jacobian_finite_diff(spec, params, x, step=step, tally=tally)
    return BACKENDS[backend](spec, params, x, tally=tally)


def route_jacobian(
    spec: CircuitSpec,
    params: np.ndarray,
    x: np.ndarray,
    n_experts: int,
    backend: str = "adjoint",
    mapping: str = "mod",
    step: float = 1e-5,
    tally: ExecutionTally | None = None,
) -> np.ndarray:
    """Jacobian of the expert-marginalized routing probabilities, shape (N, P).

    Marginalization is linear, so this equals summing rows of the per-outcome
    Jacobian by expert group; the adjoint backend exploits that directly by
    sweeping with the N marginal projectors instead of all 2**n outcomes.
    """
    dim = 2**spec.n_qubits
    groups = outcome_groups(dim, n_experts, mapping)
    if backend == "adjoint":
        return _adjoint_jacobian(spec, params, x, groups, n_experts, tally)
    if backend == "parameter_shift":
        jac = jacobian_parameter_shift(spec, params, x, tally=tally)
    elif backend == "finite_diff":
        jac = jacobian_finite_diff(spec, params, x, step=step, tally=tally)
    else:
        raise ValueError(f"unknown gradient backend {backend!r}; expected one of {sorted(BACKENDS)}")
    out = np.zeros((n_experts, spec.n_params))
    np.add.at(out, groups, jac)
    return out
