"""Hybrid quantum-classical Levenberg-Marquardt bundle adjustment testbed."""

from .ba import (
    BaProblem,
    Camera,
    NormalEquations,
    ProjectionError,
    Scene,
    back_substitute,
    build_normal_equations,
    generate_problem,
    load_problem,
    project,
    residuals_and_jacobian,
    save_problem,
    schur_reduce,
    total_cost,
)
from .hhl import (
    HermitianProblem,
    HhlConfig,
    HhlError,
    HhlSolution,
    embed_problem,
    hhl_gate_tally,
    hhl_solve,
    inversion_rotation_circuit,
    minimal_hhl_circuit,
    state_preparation_circuit,
)
from .jets import Jet
from .noise import ErrorRates, RATE_PRESETS, repeated_success, success_probability
from .optimizer import (
    SETUPS,
    ConvergenceTrace,
    DampingConfig,
    LinearBackend,
    lma_step,
    optimize,
    update_damping,
    write_trace_csv,
)
from .sim import (
    Circuit,
    GateOp,
    SimulationError,
    StateVector,
    apply_circuit,
    apply_gate,
    gate_counts,
    measure_distribution,
    post_select,
)
from .trotter import (
    EvolutionSpec,
    HermitianDecomposition,
    QpeLayout,
    decompose_hermitian,
    inverse_qft_circuit,
    qpe_circuit,
    trotter_circuit,
)

__version__ = "0.1.0"
