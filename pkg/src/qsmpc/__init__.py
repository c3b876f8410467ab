"""Simulation and receding-horizon control of continuously monitored
finite-dimensional quantum systems.

The package provides dense operator algebra, a Kraus-map trajectory
simulator for the diffusive filtering equation, deterministic averaged
propagation with adjoint gradients, a horizon optimizer whose terminal
fidelity cost makes scenario sampling unnecessary, the coherent-vector
scenario-sampling baseline, and a CLI reproducing the reference
experiments at desk scale.
"""

__version__ = "0.1.0"

from .bloch import (
    BlochSuperoperators,
    StructureConstants,
    SuNBasis,
    bloch_one_step,
    bloch_sme_step,
    bloch_to_rho,
    build_superoperators,
    generalized_gell_mann,
    rho_to_bloch,
    standard_smpc_optimize,
    value_decrease_monitor,
)
from .closed_loop import (
    ClosedLoopRecord,
    contraction_monitor,
    run_closed_loop,
    run_closed_loop_ensemble,
    run_uncontrolled,
)
from .lindblad import HorizonGrid, lindblad_rhs, propagate_costate, propagate_state
from .model import ModelConfig
from .operators import (
    OperatorError,
    SpectralDecomposition,
    angular_momentum_ops,
    bures_sq_to_pure,
    check_density_matrix,
    check_hermitian,
    fidelity,
    invariant_subspace_gap,
    ising_hamiltonian,
    pauli_chain_product,
    pure_state,
    spectral_decomposition,
    subspace_lyapunov,
)
from .pmp import (
    ControlSchedule,
    OptimizerOptions,
    bang_bang_extract,
    horizon_gradient,
    optimize_horizon,
    reduced_cost,
    switching_function,
)
from .trajectories import (
    EnsembleStats,
    SdeStepConfig,
    SimulationError,
    TrajectoryRecord,
    kraus_step,
    monte_carlo_ensemble,
    sample_increment,
    simulate_trajectory,
)
