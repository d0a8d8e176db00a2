//! Distributed sub-optimal resource allocation over weight-balanced digraphs.
//!
//! Agents hold convex costs `f_i` and reference allocations `b_i` and must
//! split a total `d = Σ b_i` while only talking to graph neighbours. The
//! ε-parameterized dynamics in [`dynamics`] reach an allocation that is
//! exactly feasible and within `O(ε)` of the optimum.

pub mod analysis;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod graph;
pub mod integrate;
pub mod linalg;
pub mod problem;

pub use analysis::{
    epsilon_sweep, epsilon_sweep_parallel, fit_exponential_rate, lyapunov_trace,
    trajectory_deviation, DeviationReport, LyapunovSeries, RateFit, SweepReport,
};
pub use dynamics::{
    NetworkState, PiConfig, PiState, PiSystem, PrimalDualSystem, ReducedState, SingularState,
    SingularSystem, SuboptimalSystem,
};
pub use equilibrium::{
    solve_equilibrium, solve_equilibrium_linear, solve_equilibrium_newton, solve_equilibrium_phi,
    solve_kkt, suboptimality_gap, Equilibrium, EquilibriumMethod, GapReport, KktSolution,
};
pub use error::{Error, Result};
pub use graph::{
    build_consensus_transform, spectral_diagnostics, ConsensusTransform, Laplacian,
    SpectralDiagnostics, WeightedDigraph,
};
pub use integrate::{
    integrate, integrate_to_times, integrate_until_converged, ConvergenceCriterion,
    IntegratorOptions, Method, Monitor, OdeSystem, Trajectory,
};
pub use problem::{Agent, CostFunction, Quadratic, ResourceProblem};
