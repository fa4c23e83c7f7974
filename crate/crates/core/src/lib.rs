//! Numerical engine for stochastic claims reserving and risk aggregation of
//! disability annuities.
//!
//! The engine computes moments and distributions of the random present value
//! of an annuity whose termination intensity is driven by a stochastic
//! environment process, via Monte Carlo simulation and via iterated backward
//! moment PDEs, with exact and approximate dimension reduction of the
//! multi-factor parameter dynamics.

pub mod error;
pub mod matrix;
pub mod model;
pub mod pde;
pub mod portfolio;
pub mod projection;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{
    cholesky_psd, estimate_random_walk, softplus, AgeTerm, BasisSet, ContractSpec,
    IntensityModel, RandomWalkParams, TimeTerm,
};
pub use pde::{build_grid, solve_moment, solve_moments, tridiagonal_solve, Grid1D, MomentGrid};
pub use portfolio::{
    aggregate_pv, lln_pv, policy_present_values, portfolio_quantile, portfolio_reserve,
    PortfolioState,
};
pub use projection::{
    alpha_1d, gamma_1d, markov_2d, mimic_1d, z_marginal_stats, DiffusionSpec, SpecKind,
};
pub use simulate::{
    ks_two_sample, present_value, present_values_per_path, sample_present_values,
    simulate_diffusion_paths, simulate_nu_paths, simulate_terminal_states, thinning_events,
    EmpiricalDistribution, PathSet, PathSource, PvSource, SimConfig,
};
