import numpy as np
import pytest

from qlma.ba import generate_problem, residuals_and_jacobian, total_cost
from qlma.hhl import HhlConfig
from qlma.optimizer import (
    SETUPS,
    DampingConfig,
    LinearBackend,
    lma_step,
    optimize,
    read_trace_csv,
    update_damping,
    write_trace_csv,
)

SETUP1 = SETUPS[1]
SETUP2 = SETUPS[2]


# ---------------------------------------------------------------------------
# damping update
# ---------------------------------------------------------------------------

def test_table_setups():
    assert (SETUP1.lambda1_init, SETUP1.lambda2, SETUP1.lambda_up, SETUP1.lambda_down) == (
        0.01, 0.01, 1.5, 0.7,
    )
    assert (SETUP2.lambda1_init, SETUP2.lambda2, SETUP2.lambda_up, SETUP2.lambda_down) == (
        0.0001, 0.0001, 1.1, 0.9,
    )


def test_damping_increases_on_direction_change():
    assert update_damping(0.5, 1.0, -100.0, SETUP1) == pytest.approx(0.5 * 1.5)


def test_damping_decreases_on_strong_reduction():
    assert update_damping(0.5, -1.0, -0.9, SETUP1) == pytest.approx(0.5 * 0.7)


def test_damping_unchanged_between_thresholds():
    assert update_damping(0.5, -1.0, -0.3, SETUP1) == 0.5


def test_damping_increases_on_tiny_reduction():
    # reduction smaller than a quarter of |omega|
    assert update_damping(0.5, -1.0, -0.1, SETUP1) == pytest.approx(0.5 * 1.5)


def test_damping_is_pure():
    args = (0.123, -0.4, -0.15, SETUP2)
    assert update_damping(*args) == update_damping(*args)


def test_damping_literal_sign_variant():
    cfg = DampingConfig(0.01, 0.01, 1.5, 0.7, literal_thresholds=True)
    # literal reading: decrease when dcost < -omega/2 = +0.5
    assert update_damping(1.0, -1.0, -0.3, cfg) == pytest.approx(0.7)


def test_damping_config_validation():
    with pytest.raises(ValueError):
        DampingConfig(0.01, 0.01, 0.9, 0.7)
    with pytest.raises(ValueError):
        DampingConfig(-1.0, 0.01, 1.5, 0.7)


# ---------------------------------------------------------------------------
# linear step
# ---------------------------------------------------------------------------

def test_step_identity_jacobian_is_negative_residual():
    r = np.array([1.0, -2.0, 0.5])
    step = lma_step(r, np.eye(3), 0.0, 0.0, LinearBackend("classical-dense"))
    assert np.allclose(step, -r)


def test_step_large_damping_limits_to_scaled_gradient():
    rng = np.random.default_rng(0)
    jac = rng.normal(size=(12, 6))
    r = rng.normal(size=12)
    lam1 = 1e8
    step = lma_step(r, jac, lam1, 0.0, LinearBackend("classical-dense"))
    dtd = np.diag(jac.T @ jac)
    expected = -(jac.T @ r) / (lam1 * dtd)
    assert np.allclose(step, expected, rtol=1e-6)


def test_step_backends_match_on_bundle_problem():
    prob = generate_problem(1)
    r, jac = residuals_and_jacobian(prob.initial, prob.initial.initial_params())
    dense = lma_step(r, jac, 0.01, 0.01, LinearBackend("classical-dense"), m_c=12)
    schur = lma_step(r, jac, 0.01, 0.01, LinearBackend("classical-schur"), m_c=12)
    assert np.allclose(dense, schur, atol=1e-10)


def test_hhl_step_matches_classical_on_well_conditioned_system():
    prob = generate_problem(1)
    r, jac = residuals_and_jacobian(prob.initial, prob.initial.initial_params())
    lam2 = 1e4  # condition number about 1 + ||JtJ|| / lam2
    classical = lma_step(r, jac, 1.0, lam2, LinearBackend("classical-dense"), m_c=12)
    quantum = lma_step(r, jac, 1.0, lam2, LinearBackend("hhl"), m_c=12)
    assert np.linalg.norm(quantum - classical) / np.linalg.norm(classical) < 5e-2


@pytest.mark.xfail(
    strict=True,
    reason="three phase qubits quantize eigenvalues to half-bin accuracy of "
    "at best 1/6 relative at the top bin, so the solver-grade step cannot "
    "track the classical step to 10% along realistic trajectories",
)
def test_backend_agreement_ten_percent_invariant():
    matched = total = 0
    for seed in range(1, 10):
        prob = generate_problem(seed)
        trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), 40)
        scene = prob.initial
        r, jac = residuals_and_jacobian(scene, scene.initial_params())
        for record in trace.records:
            lam1 = record.lambda1
            classical = lma_step(r, jac, lam1, 0.01, LinearBackend("classical-schur"), m_c=12)
            quantum = lma_step(r, jac, lam1, 0.01, LinearBackend("hhl"), m_c=12)
            total += 1
            if np.linalg.norm(quantum - classical) / np.linalg.norm(classical) < 0.10:
                matched += 1
    assert matched / total >= 0.80


# ---------------------------------------------------------------------------
# full optimization loop
# ---------------------------------------------------------------------------

def test_zero_noise_terminates_immediately():
    prob = generate_problem(1, point_noise=0, camera_position_noise=0, camera_rotation_noise=0)
    trace = optimize(prob, SETUP1, LinearBackend("classical-dense"))
    assert len(trace.records) == 1
    assert trace.records[0].cost == 0.0


def test_single_iteration_trace():
    prob = generate_problem(1)
    trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), max_iters=1)
    assert len(trace.records) == 1
    assert trace.records[0].iteration == 1


def test_setup2_cost_strictly_decreases_initially():
    prob = generate_problem(3)
    trace = optimize(prob, SETUP2, LinearBackend("classical-schur"), 15)
    costs = [total_cost(prob.initial)] + list(trace.costs())
    accepted = [r.accepted for r in trace.records]
    for i in range(min(6, len(trace.records))):
        if accepted[i]:
            assert costs[i + 1] < costs[i]


def test_iterations_strictly_increasing_and_costs_finite():
    prob = generate_problem(2)
    trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), 40)
    its = [r.iteration for r in trace.records]
    assert its == sorted(set(its))
    assert np.all(np.isfinite(trace.costs()))


def test_rejected_steps_keep_best_cost_monotone():
    prob = generate_problem(7)
    trace = optimize(prob, SETUP2, LinearBackend("classical-schur"), 40, reject_uphill=True)
    costs = [total_cost(prob.initial)] + list(trace.costs())
    for i, rec in enumerate(trace.records):
        if not rec.accepted:
            assert rec.cost == costs[i]  # rejected iterations keep the state
    assert np.all(np.diff(costs) <= 1e-12)
    best = np.minimum.accumulate(costs)
    assert np.all(np.diff(best) <= 0.0)
    assert any(not r.accepted for r in trace.records)  # the run does reject here


def test_dense_and_schur_traces_identical():
    for seed in (1, 2):
        prob = generate_problem(seed)
        t_dense = optimize(prob, SETUP1, LinearBackend("classical-dense"), 40)
        t_schur = optimize(prob, SETUP1, LinearBackend("classical-schur"), 40)
        assert np.allclose(t_dense.costs(), t_schur.costs(), atol=1e-8)


def test_hhl_backend_improves_cost():
    for seed in (1, 4):
        prob = generate_problem(seed)
        trace = optimize(prob, SETUP1, LinearBackend("hhl"), 40)
        assert trace.final_cost() < total_cost(prob.initial)


def test_hhl_backend_uses_config():
    prob = generate_problem(1)
    backend = LinearBackend("hhl", HhlConfig(n_phase_qubits=4, slices=8))
    trace = optimize(prob, SETUP1, backend, 3)
    assert len(trace.records) == 3
    assert all(r.backend == "hhl" for r in trace.records)


def test_hhl_solver_failure_becomes_rejected_iteration():
    # an inversion constant above every representable eigenphase makes the
    # quantum step fail; the loop must keep the state and raise lambda1
    prob = generate_problem(1)
    backend = LinearBackend("hhl", HhlConfig(inversion_constant=1.0))
    trace = optimize(prob, SETUP1, backend, 5)
    assert all(not r.accepted for r in trace.records)
    assert np.allclose(trace.costs(), total_cost(prob.initial))
    lams = [r.lambda1 for r in trace.records]
    assert lams == pytest.approx([0.01 * 1.5**i for i in range(5)])


def test_quaternions_stay_normalized_through_updates():
    prob = generate_problem(5)
    damping = SETUP2
    backend = LinearBackend("classical-schur")
    trace = optimize(prob, damping, backend, 10)
    assert len(trace.records) >= 1
    # run manually to inspect the final scene state
    from qlma.optimizer import _apply_increment

    scene = prob.initial
    rng = np.random.default_rng(0)
    for _ in range(5):
        scene = _apply_increment(scene, rng.normal(scale=0.01, size=scene.n_params))
        for cam in scene.cameras:
            assert abs(np.linalg.norm(cam.quaternion) - 1.0) < 1e-12


def test_step_mixing_can_be_disabled():
    prob = generate_problem(2)
    mixed = optimize(prob, SETUP1, LinearBackend("classical-schur"), 10)
    pure = optimize(prob, SETUP1, LinearBackend("classical-schur"), 10, use_step_mixing=False)
    assert not np.allclose(mixed.costs(), pure.costs())


def test_invalid_backend_rejected():
    with pytest.raises(ValueError):
        LinearBackend("quantum-annealer")
    with pytest.raises(ValueError):
        optimize(generate_problem(1), SETUP1, LinearBackend("classical-dense"), max_iters=0)


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

def test_trace_csv_round_trip(tmp_path):
    prob = generate_problem(1)
    trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), 5)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    loaded = read_trace_csv(path)
    assert loaded.problem == trace.problem
    assert len(loaded.records) == len(trace.records)
    for a, b in zip(loaded.records, trace.records):
        assert a.iteration == b.iteration
        assert a.cost == b.cost
        assert a.lambda1 == b.lambda1
        assert a.accepted == b.accepted
        assert a.seconds == 0.0  # zeroed for reproducibility


def test_trace_csv_header(tmp_path):
    prob = generate_problem(1)
    trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), 2)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    header = path.read_text().splitlines()[0]
    assert header == "problem,iteration,cost,lambda1,omega,step_norm,accepted,backend,seconds"


def test_trace_csv_timing_flag(tmp_path):
    prob = generate_problem(1)
    trace = optimize(prob, SETUP1, LinearBackend("classical-schur"), 2)
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path, record_timing=True)
    loaded = read_trace_csv(path)
    assert any(r.seconds > 0.0 for r in loaded.records)
