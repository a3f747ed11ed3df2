"""Dense statevector simulator for a small fixed gate set.

Qubit ordering convention, used everywhere in this package: qubit 0 is the
least-significant bit of the amplitude index, so the basis state
|q_{n-1} ... q_1 q_0> lives at index sum(q_k * 2**k).

Gate kinds:
    "x"    Pauli flip.
    "h"    Hadamard.
    "u"    general single-qubit rotation U(theta, phi, lam) with an extra
           explicit phase parameter gamma, so diagonal rotations such as
           e^{-i a Z/2} are representable exactly (not just up to phase).
    "cx"   singly-controlled flip; the control may trigger on |0> or |1>.
    "cu"   singly-controlled "u"; gamma becomes a relative phase.
    "cry"  Y-rotation with any number of polarity controls (zero controls is
           a plain RY).  Carries the eigenvalue-inversion rotations and
           amplitude encoding, where one rotation per register pattern is
           needed.

A controlled single-qubit gate counts as a two-qubit gate in gate tallies,
regardless of its number of controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GATE_X = "x"
GATE_H = "h"
GATE_U = "u"
GATE_CX = "cx"
GATE_CU = "cu"
GATE_CRY = "cry"

_KINDS = (GATE_X, GATE_H, GATE_U, GATE_CX, GATE_CU, GATE_CRY)
_N_PARAMS = {GATE_X: 0, GATE_H: 0, GATE_U: 4, GATE_CX: 0, GATE_CU: 4, GATE_CRY: 1}

_SQRT2_INV = 1.0 / math.sqrt(2.0)
_H_MATRIX = np.array([[_SQRT2_INV, _SQRT2_INV], [_SQRT2_INV, -_SQRT2_INV]], dtype=complex)
_X_MATRIX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

NORM_TOL = 1e-9


class SimulationError(ValueError):
    """Raised for invalid gates, states, or impossible post-selections."""


@dataclass(frozen=True)
class GateOp:
    """One unitary operation: a 2x2 action on `target`, gated by `controls`.

    `control_states` gives the polarity of each control (1 = filled dot,
    0 = open circle).  Treat instances as immutable values.
    """

    kind: str
    target: int
    controls: tuple[int, ...] = ()
    control_states: tuple[int, ...] = ()
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        if len(self.params) != _N_PARAMS[self.kind]:
            raise SimulationError(
                f"{self.kind} expects {_N_PARAMS[self.kind]} params, got {len(self.params)}"
            )
        if not self.control_states:
            object.__setattr__(self, "control_states", (1,) * len(self.controls))
        if len(self.control_states) != len(self.controls):
            raise SimulationError("controls and control_states lengths differ")
        if any(s not in (0, 1) for s in self.control_states):
            raise SimulationError("control states must be 0 or 1")
        n_ctrl = len(self.controls)
        if self.kind in (GATE_X, GATE_H, GATE_U) and n_ctrl:
            raise SimulationError(f"{self.kind} takes no controls")
        if self.kind in (GATE_CX, GATE_CU) and n_ctrl != 1:
            raise SimulationError(f"{self.kind} takes exactly one control")
        if self.target in self.controls:
            raise SimulationError("control and target qubits overlap")
        if len(set(self.controls)) != n_ctrl:
            raise SimulationError("duplicate control qubits")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.target, *self.controls)


def u_matrix(theta: float, phi: float, lam: float, gamma: float = 0.0) -> np.ndarray:
    """Dense 2x2 of the general rotation, including the explicit phase."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    m = np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )
    return np.exp(1j * gamma) * m


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def gate_matrix(op: GateOp) -> np.ndarray:
    """The 2x2 matrix applied to the target on the active control branch."""
    if op.kind == GATE_X or op.kind == GATE_CX:
        return _X_MATRIX
    if op.kind == GATE_H:
        return _H_MATRIX
    if op.kind in (GATE_U, GATE_CU):
        return u_matrix(*op.params)
    return ry_matrix(op.params[0])


# Constructors; these keep call sites terse.

def x(target: int) -> GateOp:
    return GateOp(GATE_X, target)


def h(target: int) -> GateOp:
    return GateOp(GATE_H, target)


def u(target: int, theta: float, phi: float, lam: float, gamma: float = 0.0) -> GateOp:
    return GateOp(GATE_U, target, params=(theta, phi, lam, gamma))


def cx(control: int, target: int, control_state: int = 1) -> GateOp:
    return GateOp(GATE_CX, target, controls=(control,), control_states=(control_state,))


def cu(
    control: int,
    target: int,
    theta: float,
    phi: float,
    lam: float,
    gamma: float = 0.0,
    control_state: int = 1,
) -> GateOp:
    return GateOp(
        GATE_CU,
        target,
        controls=(control,),
        control_states=(control_state,),
        params=(theta, phi, lam, gamma),
    )


def cry(
    theta: float,
    target: int,
    controls: tuple[int, ...] = (),
    control_states: tuple[int, ...] = (),
) -> GateOp:
    return GateOp(GATE_CRY, target, controls=tuple(controls), control_states=tuple(control_states), params=(theta,))


def dagger(op: GateOp) -> GateOp:
    """Inverse of a single gate op."""
    if op.kind in (GATE_X, GATE_H, GATE_CX):
        return op
    if op.kind in (GATE_U, GATE_CU):
        theta, phi, lam, gamma = op.params
        return GateOp(op.kind, op.target, op.controls, op.control_states, (-theta, -lam, -phi, -gamma))
    return GateOp(op.kind, op.target, op.controls, op.control_states, (-op.params[0],))


@dataclass(frozen=True)
class Circuit:
    """An ordered gate list on a fixed number of qubits."""

    n_qubits: int
    ops: tuple[GateOp, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.n_qubits:
                    raise SimulationError(f"qubit {q} out of range for {self.n_qubits}-qubit circuit")

    def __len__(self) -> int:
        return len(self.ops)


def concat(*circuits: Circuit) -> Circuit:
    n = max(c.n_qubits for c in circuits)
    ops: list[GateOp] = []
    for c in circuits:
        ops.extend(c.ops)
    return Circuit(n, tuple(ops))


def inverse_circuit(circuit: Circuit) -> Circuit:
    return Circuit(circuit.n_qubits, tuple(dagger(op) for op in reversed(circuit.ops)))


def remap_circuit(circuit: Circuit, mapping: dict[int, int], n_qubits: int) -> Circuit:
    """Relabel qubits through `mapping` (identity for unmapped indices)."""
    ops = []
    for op in circuit.ops:
        ops.append(
            GateOp(
                op.kind,
                mapping.get(op.target, op.target),
                tuple(mapping.get(c, c) for c in op.controls),
                op.control_states,
                op.params,
            )
        )
    return Circuit(n_qubits, tuple(ops))


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over n qubits; length 2**n, unit norm.

    Treated as immutable: every operation returns a fresh StateVector.
    """

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (2**self.n_qubits,):
            raise SimulationError(
                f"amplitude vector of length {amps.shape} does not match {self.n_qubits} qubits"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise SimulationError(f"state norm {norm} is not 1")

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls.basis(n_qubits, 0)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Apply one gate; returns the new state (norm preserved)."""
    n = state.n_qubits
    for q in op.qubits:
        if not 0 <= q < n:
            raise SimulationError(f"qubit {q} out of range for {n}-qubit state")
    amps = state.amplitudes
    m = gate_matrix(op)
    idx = np.arange(amps.size)
    mask = ((idx >> op.target) & 1) == 0
    for c, s in zip(op.controls, op.control_states):
        mask &= ((idx >> c) & 1) == s
    i0 = idx[mask]
    i1 = i0 | (1 << op.target)
    out = amps.copy()
    a0, a1 = amps[i0], amps[i1]
    out[i0] = m[0, 0] * a0 + m[0, 1] * a1
    out[i1] = m[1, 0] * a0 + m[1, 1] * a1
    return StateVector(n, out)


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    if circuit.n_qubits != state.n_qubits:
        raise SimulationError(
            f"circuit on {circuit.n_qubits} qubits applied to {state.n_qubits}-qubit state"
        )
    for op in circuit.ops:
        state = apply_gate(state, op)
    return state


def post_select(state: StateVector, qubit: int, outcome: int) -> tuple[StateVector, float]:
    """Condition on measuring `outcome` on `qubit`.

    Returns the renormalized conditional state (the qubit stays in the
    register, collapsed) and the probability of that outcome.
    """
    if not 0 <= qubit < state.n_qubits:
        raise SimulationError(f"qubit {qubit} out of range")
    if outcome not in (0, 1):
        raise SimulationError("outcome must be 0 or 1")
    idx = np.arange(state.amplitudes.size)
    keep = ((idx >> qubit) & 1) == outcome
    prob = float(np.sum(np.abs(state.amplitudes[keep]) ** 2))
    if prob < 1e-12:
        raise SimulationError(f"post-selection on qubit {qubit}={outcome} has probability {prob}")
    amps = np.where(keep, state.amplitudes, 0.0) / math.sqrt(prob)
    return StateVector(state.n_qubits, amps), prob


def measure_distribution(state: StateVector, qubits: list[int]) -> dict[int, float]:
    """Born-rule marginal over `qubits`; keys are the register values.

    qubits[j] contributes bit j of the outcome key.  Zero-probability
    outcomes are omitted.
    """
    for q in qubits:
        if not 0 <= q < state.n_qubits:
            raise SimulationError(f"qubit {q} out of range")
    idx = np.arange(state.amplitudes.size)
    key = np.zeros(state.amplitudes.size, dtype=np.int64)
    for j, q in enumerate(qubits):
        key |= ((idx >> q) & 1) << j
    probs = np.bincount(key, weights=state.probabilities, minlength=2 ** len(qubits))
    return {int(v): float(p) for v, p in enumerate(probs) if p > 0.0}


def gate_counts(circuit: Circuit) -> tuple[int, int, dict[str, int]]:
    """(one-qubit total, two-qubit total, per-kind tally).

    Any gate with at least one control lands in the two-qubit bucket; the
    two totals always sum to len(circuit.ops).
    """
    per_kind: dict[str, int] = {}
    one_qubit = two_qubit = 0
    for op in circuit.ops:
        per_kind[op.kind] = per_kind.get(op.kind, 0) + 1
        if op.controls:
            two_qubit += 1
        else:
            one_qubit += 1
    return one_qubit, two_qubit, per_kind


def op_unitary(op: GateOp, n_qubits: int) -> np.ndarray:
    """Full 2**n x 2**n embedding of one gate."""
    dim = 2**n_qubits
    cols = []
    for b in range(dim):
        cols.append(apply_gate(StateVector.basis(n_qubits, b), op).amplitudes)
    return np.column_stack(cols)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Dense unitary of the whole circuit (small circuits only)."""
    dim = 2**circuit.n_qubits
    mat = np.eye(dim, dtype=complex)
    for op in circuit.ops:
        mat = op_unitary(op, circuit.n_qubits) @ mat
    return mat
