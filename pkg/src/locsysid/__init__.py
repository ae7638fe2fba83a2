"""Local identification of subsystem dynamics inside interconnected LTI networks."""

from .datamat import (
    BlockSequence,
    FrequencySlices,
    PEDiagnostics,
    RegressorSet,
    block_toeplitz,
    build_regressors,
    dft_adjoint,
    dft_slices,
    hankel,
    hankel_adjoint,
    pe_check,
    uniform_grid,
)
from .decomp_solver import (
    DecompositionResult,
    SolverConfig,
    project_frobenius_ball,
    project_nuclear_ball,
    solve_hidden,
    solve_hidden_local,
    solve_robust,
    svt,
)
from .harness import ExperimentConfig, run_identify, run_repro, run_simulate, run_sweep
from .ident_full import ImpulseEstimate, identify_exact, identify_robust
from .netsim import (
    CouplingMap,
    NetworkSystem,
    NoiseSpec,
    Subsystem,
    Trajectory,
    build_network,
    compute_coupling,
    paper_chain,
    simulate,
    true_impulse_response,
    white_inputs,
)
from .realization import RealizedModel, estimate_order, ho_kalman, markov_check

__version__ = "0.1.0"
