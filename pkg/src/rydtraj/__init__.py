"""Quantum-jump Monte Carlo simulator for driven dissipative Rydberg lattices.

The package simulates resonantly driven two-level atoms with van der Waals
interactions on 2D disk-shaped lattices, subject to excited-state decay and
coherence relaxation.  Dynamics are unraveled into stochastic pure-state
trajectories (no-jump evolution under a non-Hermitian Hamiltonian plus
random quantum jumps); a dense master-equation oracle validates the engine
for small systems.
"""

from .lattice import (
    AtomGeometry,
    InteractionMatrix,
    PhysicalParams,
    blockade_distance,
    build_disk_lattice,
    derived_gamma_rg,
    derived_scales,
    excitation_linewidth,
    interaction_matrix,
    spacing_for_target_n,
)
from .hilbert import (
    BasisSet,
    Configuration,
    PruneRule,
    StateVector,
    build_basis,
    ground_state,
    lower,
    rank,
    unrank,
)
from .dynamics import (
    EffectiveHamiltonian,
    Propagator,
    apply,
    build_effective_hamiltonian,
    step_nojump,
)
from .mcwf import (
    EnsembleAccumulator,
    JumpChannel,
    RunOptions,
    TrajectoryRecord,
    apply_jump,
    convergence_check,
    derive_seed,
    jump_weights,
    run_ensemble,
    run_trajectory,
)
from .observables import (
    ConfigurationDistribution,
    DensityMatrix,
    ExcitationDistribution,
    classical_projection,
    configuration_distribution,
    excitation_distribution,
    kolmogorov_distance,
    mandel_q,
    mean_excitations,
    steady_state_time_average,
    trace_distance,
)
from .oracle import (
    LindbladModel,
    build_lindblad_model,
    compare_with_trajectories,
    integrate_master_equation,
    lindblad_rhs,
)

__version__ = "0.1.0"
