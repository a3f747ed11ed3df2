"""Pauli decomposition, product-formula evolution, and phase estimation.

Evolution convention: a spec with matrix A and time t implements e^{-iAt}.
Phase estimation therefore reads the eigenphase of that operator, i.e.
theta = (-lambda * t / 2pi) mod 1 for an eigenvalue lambda of A.  Callers
that want theta = +lambda * |t| / 2pi (as the linear solver does) pass a
negative time.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .sim import (
    Circuit,
    GateOp,
    SimulationError,
    cu,
    cx,
    dagger,
    h,
    inverse_circuit,
    remap_circuit,
    u,
)

PAULI_LABELS = "IXYZ"
_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

HERMITIAN_TOL = 1e-10
COEFF_TOL = 1e-12


def pauli_string_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string; label[q] acts on qubit q."""
    m = np.array([[1.0]], dtype=complex)
    for q in range(len(label) - 1, -1, -1):
        m = np.kron(m, _PAULI_1Q[label[q]])
    return m


@functools.lru_cache(maxsize=8)
def _pauli_basis(n_qubits: int) -> tuple[tuple[str, ...], np.ndarray]:
    """All 4**n Pauli strings and their dense matrices, stacked."""
    if n_qubits > 6:
        raise SimulationError("dense Pauli basis capped at 6 qubits")
    labels = []
    for code in range(4**n_qubits):
        labels.append("".join(PAULI_LABELS[(code >> (2 * q)) & 3] for q in range(n_qubits)))
    mats = np.stack([pauli_string_matrix(lbl) for lbl in labels])
    return tuple(labels), mats


@dataclass(frozen=True)
class HermitianDecomposition:
    """A Hermitian operator as sum_j coefficient_j * PauliString_j.

    Terms are ordered by descending |coefficient| (ties broken by label);
    this ordering is also the in-slice application order of the product
    formula, which fixes the otherwise arbitrary error constant.
    """

    n_qubits: int
    terms: tuple[tuple[float, str], ...]

    def __post_init__(self):
        for coef, label in self.terms:
            if len(label) != self.n_qubits or any(ch not in PAULI_LABELS for ch in label):
                raise SimulationError(f"bad Pauli label {label!r} for {self.n_qubits} qubits")
            if not math.isfinite(coef):
                raise SimulationError("non-finite coefficient")


def decompose_hermitian(matrix: np.ndarray) -> HermitianDecomposition:
    """Expand a Hermitian matrix in the Pauli-string basis.

    Coefficients are tr(P @ M) / 2**k and come out real for Hermitian input;
    terms below 1e-12 are dropped.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SimulationError("matrix must be square")
    dim = m.shape[0]
    n_qubits = dim.bit_length() - 1
    if 2**n_qubits != dim:
        raise SimulationError(f"matrix size {dim} is not a power of two")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
        raise SimulationError("matrix is not Hermitian")
    labels, basis = _pauli_basis(n_qubits)
    coeffs = np.einsum("aij,ji->a", basis, m) / dim
    if np.max(np.abs(coeffs.imag)) > HERMITIAN_TOL * scale:
        raise SimulationError("non-real Pauli coefficients")
    terms = [
        (float(c.real), lbl)
        for c, lbl in zip(coeffs, labels)
        if abs(c.real) > COEFF_TOL
    ]
    terms.sort(key=lambda t: (-abs(t[0]), t[1]))
    return HermitianDecomposition(n_qubits, tuple(terms))


def reconstruct(decomposition: HermitianDecomposition) -> np.ndarray:
    dim = 2**decomposition.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for coef, label in decomposition.terms:
        out += coef * pauli_string_matrix(label)
    return out


@dataclass(frozen=True)
class EvolutionSpec:
    """Parameters of one product-formula evolution e^{-iAt}."""

    decomposition: HermitianDecomposition
    time: float
    slices: int = 50
    order: int = 2

    def __post_init__(self):
        if self.slices < 1:
            raise SimulationError("slices must be >= 1")
        if self.order not in (1, 2):
            raise SimulationError("order must be 1 or 2")
        if not math.isfinite(self.time):
            raise SimulationError("time must be finite")


# ---------------------------------------------------------------------------
# Matrix form of the evolution.  One slice is a short product of closed-form
# Pauli exponentials (P**2 = I gives e^{-icPs} = cos(cs) I - i sin(cs) P), and
# the full evolution is a matrix power of that slice, so the slice count is
# essentially free here.  The gate form below implements the same product.
# ---------------------------------------------------------------------------

def slice_matrix(spec: EvolutionSpec) -> np.ndarray:
    """Dense unitary of a single time slice (t / slices)."""
    n = spec.decomposition.n_qubits
    dim = 2**n
    tau = spec.time / spec.slices
    eye = np.eye(dim, dtype=complex)
    labels, basis = _pauli_basis(n)
    index = {lbl: i for i, lbl in enumerate(labels)}

    def term_exp(coef: float, label: str, s: float) -> np.ndarray:
        return math.cos(coef * s) * eye - 1j * math.sin(coef * s) * basis[index[label]]

    out = eye
    if spec.order == 1:
        for coef, label in spec.decomposition.terms:
            out = term_exp(coef, label, tau) @ out
    else:
        for coef, label in spec.decomposition.terms:
            out = term_exp(coef, label, tau / 2) @ out
        for coef, label in reversed(spec.decomposition.terms):
            out = term_exp(coef, label, tau / 2) @ out
    return out


def evolution_matrix(spec: EvolutionSpec, power: int = 0) -> np.ndarray:
    """Dense unitary of the sliced evolution raised to the 2**power."""
    return np.linalg.matrix_power(slice_matrix(spec), spec.slices * 2**power)


# ---------------------------------------------------------------------------
# Gate form.
# ---------------------------------------------------------------------------

def _rz(target: int, angle: float) -> GateOp:
    # diag(e^{-ia/2}, e^{+ia/2}), phase-exact via gamma
    return u(target, 0.0, 0.0, angle, -angle / 2.0)


def _crz(control: int, target: int, angle: float) -> GateOp:
    return cu(control, target, 0.0, 0.0, angle, -angle / 2.0)


def _term_gates(coef: float, label: str, tau: float, control: int | None) -> list[GateOp]:
    """Gates for e^{-i coef tau P}: basis changes, parity ladder, Z rotation.

    Only the central rotation is promoted when `control` is given; the
    conjugating gates cancel on the inactive branch by themselves.
    """
    qubits = [q for q, ch in enumerate(label) if ch != "I"]
    pre: list[GateOp] = []
    for q in qubits:
        ch = label[q]
        if ch == "X":
            pre.append(h(q))
        elif ch == "Y":
            pre.extend([u(q, 0.0, 0.0, -math.pi / 2.0), h(q)])
    post = [dagger(op) for op in reversed(pre)]
    ladder = [cx(qubits[i], qubits[i + 1]) for i in range(len(qubits) - 1)]
    angle = 2.0 * coef * tau
    pivot = qubits[-1]
    rot = _crz(control, pivot, angle) if control is not None else _rz(pivot, angle)
    return pre + ladder + [rot] + list(reversed(ladder)) + post


def trotter_circuit(spec: EvolutionSpec, controlled_by: tuple[int, int] | None = None) -> Circuit:
    """Product-formula circuit for e^{-iAt}.

    Order 1 applies the term exponentials once per slice; order 2 applies
    half-angle forward and reversed passes.  With controlled_by=(qubit, j)
    the slice sequence is repeated slices * 2**j times with every rotation
    promoted onto the control, so the circuit is exactly the controlled
    2**j-th power of the uncontrolled evolution; identity terms become a
    single phase gate on the control.
    """
    dec = spec.decomposition
    control = None
    repeats = spec.slices
    n_qubits = dec.n_qubits
    if controlled_by is not None:
        control, power = controlled_by
        if control < dec.n_qubits:
            raise SimulationError("control qubit collides with the data register")
        repeats *= 2**power
        n_qubits = control + 1
    tau = spec.time / spec.slices
    identity_coef = sum(c for c, lbl in dec.terms if set(lbl) == {"I"})
    acting = [(c, lbl) for c, lbl in dec.terms if set(lbl) != {"I"}]

    slice_ops: list[GateOp] = []
    if spec.order == 1:
        for coef, label in acting:
            slice_ops.extend(_term_gates(coef, label, tau, control))
    else:
        for coef, label in acting:
            slice_ops.extend(_term_gates(coef, label, tau / 2, control))
        for coef, label in reversed(acting):
            slice_ops.extend(_term_gates(coef, label, tau / 2, control))

    ops = slice_ops * repeats
    if identity_coef:
        phase = -identity_coef * tau * repeats
        if control is not None:
            ops.append(u(control, 0.0, 0.0, phase))
        else:
            ops.append(u(0, 0.0, 0.0, 0.0, phase))
    return Circuit(n_qubits, tuple(ops))


# ---------------------------------------------------------------------------
# Fourier transform and phase estimation.
# ---------------------------------------------------------------------------

def _qft_circuit(qubits: list[int]) -> Circuit:
    """Forward transform; qubits[0] is the least significant bit."""
    m = len(qubits)
    ops: list[GateOp] = []
    for i in range(m - 1, -1, -1):
        ops.append(h(qubits[i]))
        for off in range(1, i + 1):
            angle = math.pi / 2**off
            ops.append(cu(qubits[i - off], qubits[i], 0.0, 0.0, angle))
    for i in range(m // 2):
        a, b = qubits[i], qubits[m - 1 - i]
        ops.extend([cx(a, b), cx(b, a), cx(a, b)])
    return Circuit(max(qubits) + 1, tuple(ops))


def inverse_qft_circuit(qubits: list[int]) -> Circuit:
    """Circuit whose dense matrix is the inverse DFT on 2**m amplitudes."""
    if not qubits:
        raise SimulationError("empty qubit list")
    return inverse_circuit(_qft_circuit(list(qubits)))


@dataclass(frozen=True)
class QpeLayout:
    """Qubit roles for phase estimation."""

    n_phase_qubits: int
    data_qubits: tuple[int, ...]
    phase_qubits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data_qubits", tuple(self.data_qubits))
        object.__setattr__(self, "phase_qubits", tuple(self.phase_qubits))
        if len(self.phase_qubits) != self.n_phase_qubits:
            raise SimulationError("phase register size mismatch")
        if set(self.data_qubits) & set(self.phase_qubits):
            raise SimulationError("phase and data registers overlap")

    @property
    def n_qubits(self) -> int:
        return max((*self.data_qubits, *self.phase_qubits)) + 1


def qpe_circuit(spec: EvolutionSpec, layout: QpeLayout) -> Circuit:
    """Phase estimation: Hadamards, controlled powers, inverse transform.

    With an eigenvector on the data register whose eigenphase is an exact
    m-bit fraction K / 2**m, the phase register ends in |K> (phase_qubits[j]
    holds bit j of K).
    """
    if len(layout.data_qubits) != spec.decomposition.n_qubits:
        raise SimulationError("layout data register does not match the operator size")
    ops: list[GateOp] = [h(q) for q in layout.phase_qubits]
    mapping = {i: q for i, q in enumerate(layout.data_qubits)}
    k = spec.decomposition.n_qubits
    for j, q in enumerate(layout.phase_qubits):
        ctrl = trotter_circuit(spec, controlled_by=(k, j))
        mapping_j = dict(mapping)
        mapping_j[k] = q
        ops.extend(remap_circuit(ctrl, mapping_j, layout.n_qubits).ops)
    ops.extend(inverse_qft_circuit(list(layout.phase_qubits)).ops)
    return Circuit(layout.n_qubits, tuple(ops))
