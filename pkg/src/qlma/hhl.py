"""Quantum linear solver: state preparation, phase estimation, eigenvalue
inversion, uncompute, post-selection.

Register layout for a 2**k system with m phase qubits: data on qubits
0..k-1 (amplitude-index low bits), phase register on k..k+m-1, inversion
ancilla on k+m.

Eigenvalue readout: with evolution time t = -pi / lambda_bound, a phase
register value v encodes the eigenvalue

    lam(v) = v / 2**m * 2 * lambda_bound          for v <= 2**(m-1)
    lam(v) = (v - 2**m) / 2**m * 2 * lambda_bound  otherwise,

i.e. the upper half of the register is read two's-complement style as the
negative spectrum produced by the Hermitian dilation.  The boundary value
v = 2**(m-1) is read as positive.  v = 0 is unresolvable and is never
rotated, so weight there is discarded by the post-selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim import (
    Circuit,
    GateOp,
    SimulationError,
    StateVector,
    apply_circuit,
    apply_gate,
    cry,
    cx,
    gate_counts,
    h,
    inverse_circuit,
    measure_distribution,
    post_select,
)
from .trotter import (
    EvolutionSpec,
    HermitianDecomposition,
    QpeLayout,
    decompose_hermitian,
    evolution_matrix,
    inverse_qft_circuit,
    qpe_circuit,
    trotter_circuit,
)

HERMITIAN_TOL = 1e-10


class HhlError(SimulationError):
    """Solver-level failure (singular bin, failed post-selection, ...)."""


@dataclass(frozen=True)
class HermitianProblem:
    """A linear system after power-of-two embedding.

    `matrix` is the Hermitian operator actually simulated; `rhs` is stored
    normalized with its original norm in `rhs_norm`.  `original_dim` and
    `dilated` record how to project a solution of the embedded system back
    onto the input system.  `scale` records any spectral rescaling applied
    to the matrix (1.0 means none).
    """

    matrix: np.ndarray
    rhs: np.ndarray
    rhs_norm: float
    original_dim: int
    dilated: bool = False
    scale: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float))
        if np.max(np.abs(m - m.T)) > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m)))):
            raise HhlError("embedded matrix is not Hermitian")

    @property
    def n_data_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1


def _next_power_of_two(n: int) -> int:
    k = 1
    while k < n:
        k *= 2
    return k


def embed_problem(matrix: np.ndarray, rhs: np.ndarray, force_dilation: bool = False) -> HermitianProblem:
    """Embed a real square system into power-of-two Hermitian form.

    Zero-pads to the next power of two with an identity diagonal on the
    padded block and zeros in the rhs.  A non-symmetric padded matrix (or
    force_dilation=True, the 12 -> 16 -> 32 expansion the optimizer's
    quantum backend always applies) is then dilated to [[0, M], [M^T, 0]]
    with the rhs in the first block; the solution of the dilated system
    lives in the second block, which works for any invertible M.
    """
    m = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise HhlError("matrix must be square")
    if b.shape != (m.shape[0],):
        raise HhlError("rhs length does not match the matrix")
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        raise HhlError("rhs is zero")

    dim0 = m.shape[0]
    dim = _next_power_of_two(dim0)
    padded = np.eye(dim)
    padded[:dim0, :dim0] = m
    b_pad = np.zeros(dim)
    b_pad[:dim0] = b

    symmetric = np.max(np.abs(padded - padded.T)) <= HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m))))
    if symmetric and not force_dilation:
        padded = (padded + padded.T) / 2.0  # drop roundoff asymmetry
        return HermitianProblem(padded, b_pad / norm, norm, dim0, dilated=False)

    dilated = np.zeros((2 * dim, 2 * dim))
    dilated[:dim, dim:] = padded
    dilated[dim:, :dim] = padded.T
    b_dil = np.zeros(2 * dim)
    b_dil[:dim] = b_pad
    return HermitianProblem(dilated, b_dil / norm, norm, dim0, dilated=True)


def project_solution(problem: HermitianProblem, embedded: np.ndarray) -> np.ndarray:
    """Undo the embedding on a solution vector of the embedded system."""
    if problem.dilated:
        half = problem.matrix.shape[0] // 2
        embedded = embedded[half:]
    return embedded[: problem.original_dim]


@dataclass(frozen=True)
class HhlConfig:
    """Solver knobs.

    inversion_constant is the rotation constant in eigenphase units
    (0 < C <= 1); None picks the smallest reachable nonzero |eigenphase|,
    which maximizes the post-selection probability while keeping every
    rotation angle valid.  lambda_bound overrides the row-sum spectral
    bound (useful when the caller knows a tight bound).  evolution chooses
    between the dense matrix form of the sliced product formula and the
    fully unrolled gate form; both implement the identical operator.
    """

    n_phase_qubits: int = 3
    slices: int = 50
    order: int = 2
    inversion_constant: float | None = None
    lambda_bound: float | None = None
    evolution: str = "matrix"
    reachable_tol: float = 1e-9

    def __post_init__(self):
        if self.n_phase_qubits < 1:
            raise HhlError("need at least one phase qubit")
        if self.inversion_constant is not None and not 0.0 < self.inversion_constant <= 1.0:
            raise HhlError("inversion constant must lie in (0, 1]")
        if self.evolution not in ("matrix", "circuit"):
            raise HhlError("evolution must be 'matrix' or 'circuit'")


@dataclass(frozen=True)
class HhlSolution:
    """De-normalized solution estimate plus run diagnostics.

    fidelity_proxy is the cosine between the post-selected state and its
    projection onto the cleanly uncomputed (phase register = 0) branch;
    1.0 means the phase register disentangled exactly.
    """

    solution: np.ndarray
    success_probability: float
    fidelity_proxy: float
    register_distribution: dict[int, float] = field(default_factory=dict)


def spectral_bound(matrix: np.ndarray) -> float:
    """Row-sum (Gershgorin-type) bound on the largest |eigenvalue|."""
    return float(np.max(np.sum(np.abs(matrix), axis=1)))


def bin_phase(value: int, n_phase_qubits: int) -> float:
    """Signed eigenphase encoded by a phase-register value."""
    half = 2 ** (n_phase_qubits - 1)
    if value <= half:
        return value / 2**n_phase_qubits
    return (value - 2**n_phase_qubits) / 2**n_phase_qubits


def state_preparation_circuit(rhs: np.ndarray, data_qubits: list[int]) -> Circuit:
    """Exact amplitude encoding of a real unit vector on the data register.

    |0..0> maps to sum_i rhs_i |i> with data_qubits[0] the least significant
    bit of i.  Uniform all-positive vectors become a Hadamard per qubit;
    anything else becomes a binary tree of polarity-controlled Y rotations.
    """
    v = np.asarray(rhs, dtype=float)
    k = len(data_qubits)
    if v.shape != (2**k,):
        raise HhlError("rhs length does not match the data register")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise HhlError("rhs must be normalized")
    n_qubits = max(data_qubits) + 1

    if np.allclose(v, 1.0 / math.sqrt(2**k), atol=1e-12):
        return Circuit(n_qubits, tuple(h(q) for q in data_qubits))

    ops: list[GateOp] = []

    def descend(sub: np.ndarray, depth: int, controls: list[tuple[int, int]]) -> None:
        qubit = data_qubits[k - 1 - depth]
        half = sub.size // 2
        left, right = sub[:half], sub[half:]
        if half == 1:
            angle = 2.0 * math.atan2(right[0], left[0])
        else:
            angle = 2.0 * math.atan2(float(np.linalg.norm(right)), float(np.linalg.norm(left)))
        if abs(angle) > 1e-15:
            ctrl_qubits = tuple(c for c, _ in controls)
            ctrl_states = tuple(s for _, s in controls)
            ops.append(cry(angle, qubit, ctrl_qubits, ctrl_states))
        if half == 1:
            return
        if np.linalg.norm(left) > 0.0:
            descend(left, depth + 1, controls + [(qubit, 0)])
        if np.linalg.norm(right) > 0.0:
            descend(right, depth + 1, controls + [(qubit, 1)])

    descend(v, 0, [])
    return Circuit(n_qubits, tuple(ops))


def inversion_rotation_circuit(
    layout: QpeLayout,
    ancilla: int,
    inversion_constant: float,
    bin_eigenvalues: list[float | None] | None = None,
) -> Circuit:
    """Per-register-value ancilla rotations encoding reciprocal eigenvalues.

    For each phase-register value v with eigenvalue lam, rotates the ancilla
    by 2*arcsin(C/lam), turning |0> into sqrt(1 - C^2/lam^2)|0> + (C/lam)|1>.
    Register value 0 is never rotated.  bin_eigenvalues[v] = None skips a
    bin (the caller asserting it is unreachable); otherwise C/|lam| > 1
    raises.  Default bins are the signed grid v/2**m.
    """
    m = layout.n_phase_qubits
    if bin_eigenvalues is None:
        bin_eigenvalues = [bin_phase(v, m) if v else None for v in range(2**m)]
    if len(bin_eigenvalues) != 2**m:
        raise HhlError("need one eigenvalue entry per register value")
    ops: list[GateOp] = []
    for value in range(1, 2**m):
        lam = bin_eigenvalues[value]
        if lam is None:
            continue
        ratio = inversion_constant / lam
        if abs(ratio) > 1.0 + 1e-12:
            raise HhlError(
                f"rotation undefined: C={inversion_constant} exceeds |eigenvalue| {abs(lam)} at register value {value}"
            )
        angle = 2.0 * math.asin(max(-1.0, min(1.0, ratio)))
        states = tuple((value >> j) & 1 for j in range(m))
        ops.append(cry(angle, ancilla, layout.phase_qubits, states))
    return Circuit(max(ancilla, layout.n_qubits - 1) + 1, tuple(ops))


def minimal_hhl_circuit() -> Circuit:
    """The three-qubit textbook instance of the full pipeline.

    Solves the bit-flip system on one data qubit: Hadamard encoding of the
    right-hand side, a one-qubit phase estimation (H, controlled flip, H),
    the eigenvalue inversion as an open-circle-controlled flip, and the
    estimation run backwards.  Data on qubit 0, phase on 1, ancilla on 2.
    """
    data, phase, anc = 0, 1, 2
    ops = (
        h(data),
        h(phase),
        cx(phase, data),
        h(phase),
        cx(phase, anc, control_state=0),
        h(phase),
        cx(phase, data),
        h(phase),
    )
    return Circuit(3, ops)


def _nearest_unitary(matrix: np.ndarray) -> np.ndarray:
    """Polar projection; the exact operator is unitary, only roundoff is not."""
    u_, _, vt = np.linalg.svd(matrix)
    return u_ @ vt


def _apply_controlled_block(amps: np.ndarray, block: np.ndarray, n_data: int, control: int) -> np.ndarray:
    """Apply a dense unitary on the (contiguous, low) data qubits when the
    control qubit is 1."""
    rows = amps.reshape(-1, 2**n_data)
    sel = (np.arange(rows.shape[0]) >> (control - n_data)) & 1 == 1
    out = rows.copy()
    out[sel] = rows[sel] @ block.T
    return out.reshape(-1)


def hhl_solve(problem: HermitianProblem, config: HhlConfig = HhlConfig()) -> HhlSolution:
    """Run the full pipeline and read the solution off the statevector.

    Builds |b>, runs phase estimation with the sliced product-formula
    evolution, applies the eigenvalue-inversion rotations on the reachable
    register values, uncomputes the estimation, and post-selects the
    ancilla on |1>.  Amplitudes are read exactly from the simulated state
    (no sampling); the estimate is block / C * ||b|| / (2 * lambda_bound),
    with the overall phase removed by the smallest rotation that makes the
    dominant entry real (sign-preserving).
    """
    k = problem.n_data_qubits
    m = config.n_phase_qubits
    n = k + m + 1
    ancilla = k + m
    data_qubits = list(range(k))
    phase_qubits = list(range(k, k + m))
    layout = QpeLayout(m, tuple(data_qubits), tuple(phase_qubits))

    bound = config.lambda_bound if config.lambda_bound is not None else spectral_bound(problem.matrix)
    if bound <= 0.0:
        raise HhlError("spectral bound must be positive")
    time = -math.pi / bound
    spec = EvolutionSpec(decompose_hermitian(problem.matrix), time, config.slices, config.order)

    state = StateVector.zero(n)
    prep = state_preparation_circuit(problem.rhs, data_qubits)
    for op in prep.ops:
        state = apply_gate(state, op)

    iqft = inverse_qft_circuit(phase_qubits)
    if config.evolution == "circuit":
        forward = qpe_circuit(spec, layout)
        state = apply_circuit(state, Circuit(n, forward.ops))
    else:
        for q in phase_qubits:
            state = apply_gate(state, h(q))
        amps = state.amplitudes
        step = _nearest_unitary(evolution_matrix(spec))
        for j, q in enumerate(phase_qubits):
            amps = _apply_controlled_block(amps, np.linalg.matrix_power(step, 2**j), k, q)
            amps = amps / np.linalg.norm(amps)  # absorb float drift of the powers
        state = StateVector(n, amps)
        state = apply_circuit(state, Circuit(n, iqft.ops))

    register = measure_distribution(state, phase_qubits)
    reachable = {v for v, p in register.items() if p > config.reachable_tol}
    reachable_nonzero = sorted(v for v in reachable if v != 0)
    if not reachable_nonzero:
        raise HhlError("phase register resolves only the zero eigenvalue bin")

    if config.inversion_constant is not None:
        constant = config.inversion_constant
    else:
        constant = min(abs(bin_phase(v, m)) for v in reachable_nonzero)

    bins: list[float | None] = [None] * 2**m
    for v in range(1, 2**m):
        lam = bin_phase(v, m)
        if abs(constant / lam) <= 1.0 + 1e-12:
            bins[v] = lam
        elif v in reachable:
            raise HhlError(
                f"inversion constant {constant} is invalid for reachable register value {v}"
            )
    inversion = inversion_rotation_circuit(layout, ancilla, constant, bins)
    state = apply_circuit(state, Circuit(n, inversion.ops))

    if config.evolution == "circuit":
        state = apply_circuit(state, Circuit(n, inverse_circuit(forward).ops))
    else:
        state = apply_circuit(state, Circuit(n, inverse_circuit(iqft).ops))
        amps = state.amplitudes
        step_dag = step.conj().T
        for j, q in reversed(list(enumerate(phase_qubits))):
            amps = _apply_controlled_block(amps, np.linalg.matrix_power(step_dag, 2**j), k, q)
            amps = amps / np.linalg.norm(amps)
        state = StateVector(n, amps)
        for q in phase_qubits:
            state = apply_gate(state, h(q))

    selected = state.amplitudes[2 ** (k + m) :]
    success = float(np.sum(np.abs(selected) ** 2))
    if success < 1e-12:
        raise HhlError(f"post-selection probability {success} below threshold")
    success = min(success, 1.0)

    block = selected[: 2**k]
    block_norm = float(np.linalg.norm(block))
    fidelity = block_norm / math.sqrt(success) if success > 0 else 0.0

    # Smallest phase rotation making the dominant entry real; keeps the sign
    # of legitimately negative solutions intact.
    pivot = int(np.argmax(np.abs(block)))
    phase = float(np.angle(block[pivot])) if block_norm > 0 else 0.0
    if phase > math.pi / 2:
        phase -= math.pi
    elif phase < -math.pi / 2:
        phase += math.pi
    aligned = np.real(block * np.exp(-1j * phase))

    denorm = problem.rhs_norm / (constant * 2.0 * bound) / problem.scale
    solution = project_solution(problem, aligned * denorm)
    return HhlSolution(solution, success, min(fidelity, 1.0), register)


def hhl_gate_tally(problem: HermitianProblem, config: HhlConfig = HhlConfig()) -> tuple[int, int, dict[str, int]]:
    """Gate tally of the fully unrolled pipeline, computed compositionally.

    Counts the state preparation, Hadamards, one controlled evolution per
    phase qubit (slice gates times slices * 2**j), the inverse transform,
    the inversion rotations, and the uncompute mirror, without materializing
    the (possibly huge) op list.
    """
    k = problem.n_data_qubits
    m = config.n_phase_qubits
    data_qubits = list(range(k))
    phase_qubits = list(range(k, k + m))
    layout = QpeLayout(m, tuple(data_qubits), tuple(phase_qubits))

    def add(
        total: tuple[int, int, dict[str, int]],
        part: tuple[int, int, dict[str, int]],
        factor: int = 1,
    ) -> tuple[int, int, dict[str, int]]:
        one, two, per = total
        p1, p2, pk = part
        per = dict(per)
        for kind, cnt in pk.items():
            per[kind] = per.get(kind, 0) + cnt * factor
        return one + p1 * factor, two + p2 * factor, per

    bound = config.lambda_bound if config.lambda_bound is not None else spectral_bound(problem.matrix)
    dec = decompose_hermitian(problem.matrix)
    has_identity = any(set(lbl) == {"I"} for _, lbl in dec.terms)
    acting = HermitianDecomposition(
        dec.n_qubits, tuple(t for t in dec.terms if set(t[1]) != {"I"})
    )
    one_slice = trotter_circuit(
        EvolutionSpec(acting, -math.pi / bound, 1, config.order), controlled_by=(k, 0)
    )
    slice_tally = gate_counts(one_slice)
    powers = 2 * sum(2**j for j in range(m))  # estimation plus uncompute
    hadamards = (2 * m, 0, {"h": 2 * m})
    # the identity term collapses to one phase gate per controlled power
    phase_gates = (2 * m, 0, {"u": 2 * m}) if has_identity else (0, 0, {})

    total: tuple[int, int, dict[str, int]] = (0, 0, {})
    total = add(total, gate_counts(state_preparation_circuit(problem.rhs, data_qubits)))
    total = add(total, hadamards)
    total = add(total, slice_tally, factor=config.slices * powers)
    total = add(total, phase_gates)
    total = add(total, gate_counts(inverse_qft_circuit(phase_qubits)), factor=2)
    total = add(total, gate_counts(inversion_rotation_circuit(layout, k + m, 1.0 / 2**m)))
    return total
