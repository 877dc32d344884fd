//! Adherence-coupled fleet rebalancing.
//!
//! Drivers follow platform recommendations with a probability that tracks a
//! Beta posterior over "participating gets me a ride". Participation raises
//! congestion, congestion lowers the chance of being matched, and matching
//! outcomes feed back into the posterior. This crate provides
//!
//! * [`demand`]: the Poisson demand law and `g(a) = E[min(1, D/a)]`,
//! * [`micro`]: a seeded K-agent stochastic simulator,
//! * [`meanfield`]: the deterministic population recursion,
//! * [`equilibrium`]: fixed-point solving, uniqueness certificates and root scans,
//! * [`control`]: steady-state metrics, the adherence/throughput frontier and
//!   the optimal constant recommendation intensity under an adherence floor.

pub mod control;
pub mod demand;
pub mod equilibrium;
mod error;
pub mod meanfield;
pub mod micro;

pub use control::{
    frontier, frontier_transient, gamma_prime_at_p, optimal_u, steady_state_metrics,
    throughput_monotonicity_certificate, GammaPrime, MonotonicityCertificate, OptimalControlResult, OptimalStatus,
    SteadyStateMetrics,
};
pub use demand::{eval_g, eval_g_prime, g_oracle, PoissonTable};
pub use equilibrium::{
    phi, scan_fixed_points, solve_x_star, uniqueness_certificate, EquilibriumResult, FixedPointScan, Regime,
    UniquenessCertificate,
};
pub use error::{Error, Result};
pub use meanfield::{
    convergence_time, mf_step, mf_trajectory, MeanFieldState, ModelParams, StepDiagnostics, TrajectoryPoint,
};
pub use micro::{
    allocation_prob_exact, effective_participation, run_monte_carlo, AgentState, Demand, EpochOutcome, MicroState,
    MonteCarloConfig, TrajectoryBundle,
};

/// Default bisection tolerance on the adherence fixed point.
pub const DEFAULT_DELTA_X: f64 = 1e-10;
/// Default bisection tolerance on the recommendation intensity.
pub const DEFAULT_DELTA_U: f64 = 1e-6;
