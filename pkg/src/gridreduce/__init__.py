"""Reduced power-grid models built on the projected incidence matrix.

The package reduces a grid with constant-power loads to a generator-only
model while keeping the original line (edge) coordinates, simulates the
full and reduced dynamics side by side, and closes the loop with a
distributed averaging controller that restores nominal frequency at the
cheapest dispatch.
"""

from .checks import (
    PropertyReport,
    SuiteReport,
    random_connected_graph,
    random_network,
    random_partition,
    run_property_suite,
)
from .control import (
    CommunicationGraph,
    CostModel,
    closed_loop_rhs,
    controller_rhs,
    lyapunov_value,
    solve_ofr,
)
from .errors import (
    ConvergenceError,
    GridReduceError,
    IncompatibleStateError,
    RegularityError,
    ScenarioError,
    SecurityViolation,
)
from .graphs import (
    NodePartition,
    ProjectedIncidence,
    UndirectedGraph,
    as_edge_weights,
    incidence_matrix,
    is_connected,
    kernel_projection,
    kron_edge_recovery,
    projected_incidence,
    schur_complement,
    weighted_laplacian,
)
from .model import (
    SECURITY_GUARD,
    SECURITY_LIMIT,
    EquilibriumPoint,
    FullState,
    NetworkParameters,
    ReducedState,
    active_power,
    conserved_load_vector,
    ensure_secure,
    find_equilibrium,
    frequency_disagreement,
    gamma_prime,
    hamiltonian,
    kron_disagreement,
    kron_hamiltonian,
    line_weights,
    linear_dae_residual,
    linear_reduced_rhs,
    nonlinear_reduced_rhs,
    omega_L_reconstruct,
    p_hat,
    project_edge_angles,
    projected_incidence_at,
    security_margin,
    solve_theta_L,
    storage_energy,
    synchronous_frequency,
)
from .report import csv_header, read_csv, write_csv, write_svg
from .runner import (
    ComparisonResult,
    ScenarioResult,
    SegmentRun,
    merge_trajectories,
    run_comparison,
    run_scenario,
)
from .scenario import (
    ControllerSpec,
    InitialSpec,
    LineSpec,
    LoadEvent,
    NetworkSpec,
    OutputSpec,
    Scenario,
    build_network,
    builtin_case6,
    bundled_case6_path,
    format_scenario,
    load_scenario,
    parse_scenario,
)
from .simulate import (
    IntegratorConfig,
    ReconstructedAngles,
    Trajectory,
    integrate_closed_loop,
    integrate_dae,
    integrate_reduced,
    monitors,
    project_compatible,
    reconstruct_theta,
    run_linear_pair,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "GridReduceError",
    "RegularityError",
    "ConvergenceError",
    "SecurityViolation",
    "IncompatibleStateError",
    "ScenarioError",
    "UndirectedGraph",
    "NodePartition",
    "ProjectedIncidence",
    "as_edge_weights",
    "incidence_matrix",
    "weighted_laplacian",
    "is_connected",
    "schur_complement",
    "kernel_projection",
    "projected_incidence",
    "kron_edge_recovery",
    "NetworkParameters",
    "ReducedState",
    "FullState",
    "EquilibriumPoint",
    "SECURITY_LIMIT",
    "SECURITY_GUARD",
    "line_weights",
    "active_power",
    "linear_dae_residual",
    "solve_theta_L",
    "p_hat",
    "linear_reduced_rhs",
    "gamma_prime",
    "projected_incidence_at",
    "omega_L_reconstruct",
    "nonlinear_reduced_rhs",
    "conserved_load_vector",
    "synchronous_frequency",
    "find_equilibrium",
    "storage_energy",
    "hamiltonian",
    "kron_hamiltonian",
    "frequency_disagreement",
    "kron_disagreement",
    "project_edge_angles",
    "security_margin",
    "ensure_secure",
    "CostModel",
    "CommunicationGraph",
    "solve_ofr",
    "controller_rhs",
    "closed_loop_rhs",
    "lyapunov_value",
    "IntegratorConfig",
    "Trajectory",
    "ReconstructedAngles",
    "integrate_reduced",
    "integrate_closed_loop",
    "integrate_dae",
    "project_compatible",
    "reconstruct_theta",
    "run_linear_pair",
    "monitors",
    "Scenario",
    "NetworkSpec",
    "LineSpec",
    "InitialSpec",
    "LoadEvent",
    "ControllerSpec",
    "OutputSpec",
    "parse_scenario",
    "load_scenario",
    "format_scenario",
    "build_network",
    "builtin_case6",
    "bundled_case6_path",
    "SegmentRun",
    "ScenarioResult",
    "ComparisonResult",
    "run_scenario",
    "run_comparison",
    "merge_trajectories",
    "csv_header",
    "write_csv",
    "read_csv",
    "write_svg",
    "PropertyReport",
    "SuiteReport",
    "random_connected_graph",
    "random_partition",
    "random_network",
    "run_property_suite",
]
