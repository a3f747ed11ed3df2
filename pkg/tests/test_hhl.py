import math

import numpy as np
import pytest

from qlma.hhl import (
    HermitianProblem,
    HhlConfig,
    HhlError,
    bin_phase,
    embed_problem,
    hhl_gate_tally,
    hhl_solve,
    inversion_rotation_circuit,
    minimal_hhl_circuit,
    spectral_bound,
    state_preparation_circuit,
)
from qlma.sim import (
    StateVector,
    apply_circuit,
    apply_gate,
    circuit_unitary,
    gate_counts,
    measure_distribution,
    post_select,
)
from qlma.trotter import QpeLayout

FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

def test_embed_hermitian_two_by_two_unchanged():
    b = np.array([1.0, 1.0]) / math.sqrt(2)
    prob = embed_problem(FLIP, b)
    assert prob.matrix.shape == (2, 2)
    assert not prob.dilated
    assert np.allclose(prob.matrix, FLIP)
    assert np.allclose(prob.rhs, b)
    assert prob.rhs_norm == pytest.approx(1.0)


def test_embed_pads_to_next_power_of_two():
    prob = embed_problem(np.eye(3), np.array([1.0, 0.0, 0.0]))
    assert prob.matrix.shape == (4, 4)
    assert np.allclose(prob.matrix, np.eye(4))
    assert np.allclose(prob.rhs, [1.0, 0.0, 0.0, 0.0])
    assert not prob.dilated


def test_embed_twelve_by_twelve_forced_dilation():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 12))
    m = a + a.T
    prob = embed_problem(m, rng.normal(size=12), force_dilation=True)
    assert prob.matrix.shape == (32, 32)
    assert prob.n_data_qubits == 5
    assert prob.dilated
    # dilation blocks: [[0, P], [P^T, 0]]
    assert np.allclose(prob.matrix[:16, :16], 0.0)
    assert np.allclose(prob.matrix[:16, 16:][:12, :12], m)


def test_embed_non_symmetric_dilates():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    prob = embed_problem(m, np.array([1.0, 1.0]))
    assert prob.dilated
    assert prob.matrix.shape == (4, 4)
    assert np.max(np.abs(prob.matrix - prob.matrix.T)) < 1e-12


def test_embed_dilated_system_solves_original():
    # classical check of the embedding algebra on a non-symmetric system
    rng = np.random.default_rng(1)
    m = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    b = rng.normal(size=3)
    prob = embed_problem(m, b)
    y = np.linalg.solve(prob.matrix, prob.rhs * prob.rhs_norm)
    half = prob.matrix.shape[0] // 2
    assert np.allclose(y[half : half + 3], np.linalg.solve(m, b), atol=1e-10)


def test_embed_rejects_zero_rhs():
    with pytest.raises(HhlError):
        embed_problem(np.eye(2), np.zeros(2))


def test_spectral_bound_covers_eigenvalues():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(8, 8))
    m = a + a.T
    bound = spectral_bound(m)
    assert bound >= np.max(np.abs(np.linalg.eigvalsh(m)))


# ---------------------------------------------------------------------------
# state preparation
# ---------------------------------------------------------------------------

def test_preparation_basis_vector_is_empty():
    c = state_preparation_circuit(np.array([1.0, 0.0]), [0])
    assert len(c.ops) == 0


def test_preparation_uniform_is_hadamards():
    c = state_preparation_circuit(np.array([1.0, 1.0]) / math.sqrt(2), [0])
    assert [op.kind for op in c.ops] == ["h"]
    c = state_preparation_circuit(np.full(4, 0.5), [0, 1])
    assert [op.kind for op in c.ops] == ["h", "h"]


@pytest.mark.parametrize("trial", range(8))
def test_preparation_encodes_random_real_vectors(trial):
    rng = np.random.default_rng(300 + trial)
    k = rng.integers(1, 4)
    v = rng.normal(size=2**k)
    v /= np.linalg.norm(v)
    circ = state_preparation_circuit(v, list(range(k)))
    out = apply_circuit(StateVector.zero(k), circ)
    assert np.allclose(out.amplitudes, v, atol=1e-12)


def test_preparation_handles_signs_and_zeros():
    v = np.array([0.0, -0.6, 0.0, 0.8])
    out = apply_circuit(StateVector.zero(2), state_preparation_circuit(v, [0, 1]))
    assert np.allclose(out.amplitudes, v, atol=1e-12)


def test_preparation_rejects_unnormalized():
    with pytest.raises(HhlError):
        state_preparation_circuit(np.array([1.0, 1.0]), [0])


# ---------------------------------------------------------------------------
# inversion rotation
# ---------------------------------------------------------------------------

def _ancilla_amplitudes(layout, ancilla, constant, bins, register_value):
    circ = inversion_rotation_circuit(layout, ancilla, constant, bins)
    n = ancilla + 1
    amps = np.zeros(2**n, dtype=complex)
    amps[register_value << len(layout.data_qubits)] = 1.0
    # layout data register occupies the low bits here
    state = apply_circuit(StateVector(n, amps), circ)
    dist = measure_distribution(state, [ancilla])
    return math.sqrt(dist.get(0, 0.0)), math.sqrt(dist.get(1, 0.0))


def _layout(m):
    return QpeLayout(m, (0,), tuple(range(1, 1 + m)))


def test_inversion_full_flip_at_unit_ratio():
    lay = _layout(1)
    a0, a1 = _ancilla_amplitudes(lay, 2, 1.0, [None, 1.0], 1)
    assert a1 == pytest.approx(1.0, abs=1e-12)
    assert a0 == pytest.approx(0.0, abs=1e-12)


def test_inversion_half_ratio_amplitudes():
    lay = _layout(1)
    a0, a1 = _ancilla_amplitudes(lay, 2, 0.5, [None, 1.0], 1)
    assert a0 == pytest.approx(math.sqrt(0.75), abs=1e-12)
    assert a1 == pytest.approx(0.5, abs=1e-12)


def test_inversion_two_branch_amplitudes():
    lay = _layout(2)
    bins = [None, 0.5, 1.0, None]
    _, a1 = _ancilla_amplitudes(lay, 3, 0.5, bins, 1)
    assert a1 == pytest.approx(1.0, abs=1e-12)
    _, a1 = _ancilla_amplitudes(lay, 3, 0.5, bins, 2)
    assert a1 == pytest.approx(0.5, abs=1e-12)


def test_inversion_zero_bin_untouched():
    lay = _layout(2)
    circ = inversion_rotation_circuit(lay, 3, 0.25)
    state = apply_circuit(StateVector.zero(4), circ)  # register value 0
    assert np.allclose(state.amplitudes, StateVector.zero(4).amplitudes)


def test_inversion_default_bins_are_signed_grid():
    assert bin_phase(1, 3) == pytest.approx(1 / 8)
    assert bin_phase(4, 3) == pytest.approx(1 / 2)  # boundary reads positive
    assert bin_phase(5, 3) == pytest.approx(-3 / 8)
    assert bin_phase(7, 3) == pytest.approx(-1 / 8)


def test_inversion_invalid_constant_raises():
    lay = _layout(1)
    with pytest.raises(HhlError):
        inversion_rotation_circuit(lay, 2, 1.0, [None, 0.5])


# ---------------------------------------------------------------------------
# the three-qubit textbook circuit
# ---------------------------------------------------------------------------

def test_minimal_circuit_intermediate_states():
    circ = minimal_hhl_circuit()
    state = StateVector.zero(3)
    seen = {}
    for i, op in enumerate(circ.ops):
        state = apply_gate(state, op)
        seen[i] = state.amplitudes.copy()
    # after the two encoding Hadamards: (1/2)|0>(|0>+|1>)(|0>+|1>)
    assert np.allclose(seen[1], [0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0], atol=1e-12)
    # after the inversion flip: ancilla |1>, register |0>, data (|0>+|1>)/sqrt2
    s = 1 / math.sqrt(2)
    assert np.allclose(seen[4], [0, 0, 0, 0, s, s, 0, 0], atol=1e-12)
    # final state equals the step-5 state (uncompute leaves the data register)
    assert np.allclose(seen[7], [0, 0, 0, 0, s, s, 0, 0], atol=1e-12)


def test_minimal_circuit_final_distribution_and_postselect():
    state = apply_circuit(StateVector.zero(3), minimal_hhl_circuit())
    dist = measure_distribution(state, [0])
    assert dist[0] == pytest.approx(0.5, abs=1e-12)
    assert dist[1] == pytest.approx(0.5, abs=1e-12)
    _, prob = post_select(state, 2, 1)
    assert prob == pytest.approx(1.0, abs=1e-12)


def test_minimal_circuit_gate_census():
    one, two, per = gate_counts(minimal_hhl_circuit())
    assert per == {"h": 5, "cx": 3}
    assert (one, two) == (5, 3)


# ---------------------------------------------------------------------------
# full solver
# ---------------------------------------------------------------------------

def test_golden_flip_system():
    b = np.array([1.0, 1.0]) / math.sqrt(2)
    sol = hhl_solve(embed_problem(FLIP, b))
    assert np.linalg.norm(FLIP @ sol.solution - b) < 1e-10
    assert sol.success_probability == pytest.approx(1.0, abs=1e-10)
    assert sol.fidelity_proxy == pytest.approx(1.0, abs=1e-10)


def test_identity_matrix_returns_rhs():
    rng = np.random.default_rng(4)
    for dim in (2, 4):
        b = rng.normal(size=dim)
        sol = hhl_solve(embed_problem(np.eye(dim), b))
        assert np.allclose(sol.solution, b, atol=1e-8)


def test_padded_identity_projection():
    sol = hhl_solve(embed_problem(np.eye(3), np.array([1.0, 0.0, 0.0])))
    assert sol.solution.shape == (3,)
    assert np.allclose(sol.solution, [1.0, 0.0, 0.0], atol=1e-8)


def _grid_spd(rng, dim, bound=1.0, m=3, top_bin=None):
    """Random SPD with eigenvalues on the phase grid.

    top_bin caps the largest usable bin; the dilation mirrors the spectrum,
    and the boundary bin (phase exactly 1/2) aliases +/-lambda_max, so
    dilated tests must stay below it.
    """
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    top = top_bin if top_bin is not None else 2 ** (m - 1)
    grid = [v / 2**m * 2 * bound for v in range(1, top + 1)]
    lams = rng.choice(grid, size=dim)
    return q @ np.diag(lams) @ q.T


def test_on_grid_solutions_match_dense_solve():
    rng = np.random.default_rng(5)
    cfg = HhlConfig(lambda_bound=1.0, slices=2**20)
    for _ in range(5):
        a = _grid_spd(rng, 4)
        b = rng.normal(size=4)
        b /= np.linalg.norm(b)
        sol = hhl_solve(embed_problem(a, b), cfg)
        expected = np.linalg.solve(a, b)
        assert np.linalg.norm(sol.solution - expected) / np.linalg.norm(expected) < 1e-6


def test_matrix_and_circuit_paths_agree():
    rng = np.random.default_rng(6)
    a = _grid_spd(rng, 2)
    b = rng.normal(size=2)
    b /= np.linalg.norm(b)
    prob = embed_problem(a, b)
    fast = hhl_solve(prob, HhlConfig(lambda_bound=1.0, slices=3))
    slow = hhl_solve(prob, HhlConfig(lambda_bound=1.0, slices=3, evolution="circuit"))
    assert np.allclose(fast.solution, slow.solution, atol=1e-9)
    assert fast.success_probability == pytest.approx(slow.success_probability, abs=1e-9)


def test_scaling_covariance():
    rng = np.random.default_rng(7)
    a = _grid_spd(rng, 4)
    b = rng.normal(size=4)
    b /= np.linalg.norm(b)
    base = hhl_solve(embed_problem(a, b), HhlConfig(lambda_bound=1.0, slices=2**16))
    for alpha in (0.5, 2.0):
        scaled = hhl_solve(
            embed_problem(alpha * a, b), HhlConfig(lambda_bound=alpha, slices=2**16)
        )
        assert np.allclose(scaled.solution, base.solution / alpha, atol=1e-6)


def test_success_probability_matches_analytic_formula():
    rng = np.random.default_rng(8)
    a = _grid_spd(rng, 4)
    b = rng.normal(size=4)
    b /= np.linalg.norm(b)
    sol = hhl_solve(embed_problem(a, b), HhlConfig(lambda_bound=1.0, slices=2**20))
    lams, vecs = np.linalg.eigh(a)
    betas = vecs.T @ b
    phases = lams / 2.0  # lambda / (2 * bound)
    constant = min(abs(p) for p, w in zip(phases, betas) if abs(w) > 1e-12)
    expected = sum(w**2 * constant**2 / p**2 for w, p in zip(betas, phases))
    assert sol.success_probability == pytest.approx(expected, abs=1e-8)


def test_negative_eigenvalues_through_dilation():
    rng = np.random.default_rng(9)
    a = _grid_spd(rng, 4, top_bin=3)
    b = rng.normal(size=4)
    prob = embed_problem(a, b, force_dilation=True)
    assert prob.dilated
    sol = hhl_solve(prob, HhlConfig(lambda_bound=1.0, slices=2**20))
    expected = np.linalg.solve(a, b)
    assert np.linalg.norm(sol.solution - expected) / np.linalg.norm(expected) < 1e-6


def test_uncompute_returns_phase_register_to_zero():
    # drive the public pieces end to end and inspect the register before
    # post-selection
    from qlma.trotter import EvolutionSpec, decompose_hermitian, qpe_circuit
    from qlma.sim import Circuit, inverse_circuit

    b = np.array([1.0, 1.0]) / math.sqrt(2)
    prob = embed_problem(FLIP, b)
    k, m = 1, 3
    layout = QpeLayout(m, (0,), tuple(range(k, k + m)))
    spec = EvolutionSpec(decompose_hermitian(prob.matrix), -math.pi / 1.0, 50, 2)
    n = k + m + 1
    state = StateVector.zero(n)
    state = apply_circuit(state, Circuit(n, state_preparation_circuit(prob.rhs, [0]).ops))
    forward = qpe_circuit(spec, layout)
    state = apply_circuit(state, Circuit(n, forward.ops))
    inv = inversion_rotation_circuit(layout, k + m, 1.0 / 8.0)  # valid for all grid bins
    state = apply_circuit(state, Circuit(n, inv.ops))
    state = apply_circuit(state, Circuit(n, inverse_circuit(forward).ops))
    register = measure_distribution(state, list(layout.phase_qubits))
    assert register.get(0, 0.0) >= 1.0 - 1e-9


def test_failure_when_constant_invalid_for_reachable_bin():
    b = np.array([1.0, 1.0]) / math.sqrt(2)
    prob = embed_problem(FLIP, b)
    with pytest.raises(HhlError):
        hhl_solve(prob, HhlConfig(inversion_constant=1.0))  # C=1 > |phase|=1/2


def test_gate_tally_structure():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(12, 12))
    prob = embed_problem(a + a.T, rng.normal(size=12), force_dilation=True)
    one, two, per = hhl_gate_tally(prob, HhlConfig(slices=50))
    assert one > 0 and two > 0
    assert set(per) <= {"x", "h", "u", "cx", "cu", "cry"}
    assert one + two == sum(per.values())
    # fully unrolled product formula dwarfs the composite-instruction tally
    assert two > 1000
