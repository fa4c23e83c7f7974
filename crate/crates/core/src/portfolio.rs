//! Portfolio-level aggregation of policy present values.
//!
//! Policies are homogeneous (same age, payment and horizon) and independent
//! given the environment path. Small portfolios are aggregated exactly by
//! simulating each policy's termination; large portfolios use the
//! conditional law-of-large-numbers approximation, under which only the
//! systematic (environment) risk remains.

use crate::error::{Error, Result};
use crate::model::ContractSpec;
use crate::simulate::{thinning_events, EmpiricalDistribution};

/// Active/terminated status of each policy at the valuation time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortfolioState {
    pub n_policies: usize,
    pub active: Vec<bool>,
}

impl PortfolioState {
    pub fn new(active: Vec<bool>) -> Self {
        PortfolioState {
            n_policies: active.len(),
            active,
        }
    }

    pub fn all_active(n_policies: usize) -> Self {
        PortfolioState {
            n_policies,
            active: vec![true; n_policies],
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

/// Present value of each policy on a fixed intensity path: terminations are
/// thinned per policy, payments accumulate by trapezoid while the policy is
/// alive. Inactive policies contribute zero.
pub fn policy_present_values(
    portfolio: &PortfolioState,
    q_path: &[f64],
    contract: &ContractSpec,
    time_grid: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    if q_path.len() != time_grid.len() {
        return Err(Error::GridMismatch(format!(
            "intensity path has {} nodes, grid has {}",
            q_path.len(),
            time_grid.len()
        )));
    }
    if time_grid.is_empty() {
        return Err(Error::GridMismatch("empty time grid".into()));
    }
    let t0 = time_grid[0];
    let gdisc: Vec<f64> = time_grid
        .iter()
        .map(|&s| contract.payment(s) * (-contract.rate * (s - t0)).exp())
        .collect();
    // Cumulative trapezoid of the discounted payment stream up to node j.
    let mut cum = vec![0.0; time_grid.len()];
    for j in 1..time_grid.len() {
        let dt_j = time_grid[j] - time_grid[j - 1];
        cum[j] = cum[j - 1] + 0.5 * (gdisc[j - 1] + gdisc[j]) * dt_j;
    }

    let events = thinning_events(q_path, time_grid, portfolio.n_policies, seed);
    let n_steps = time_grid.len() - 1;
    Ok(portfolio
        .active
        .iter()
        .zip(&events)
        .map(|(&active, &event)| {
            if !active {
                return 0.0;
            }
            match event {
                // Alive through node k, terminated during step k: the final
                // segment pays its surviving endpoint only.
                Some(k) => {
                    let dt_k = time_grid[k + 1] - time_grid[k];
                    cum[k] + 0.5 * gdisc[k] * dt_k
                }
                None => cum[n_steps],
            }
        })
        .collect())
}

/// Total present value of the portfolio on a fixed intensity path.
pub fn aggregate_pv(
    portfolio: &PortfolioState,
    q_path: &[f64],
    contract: &ContractSpec,
    time_grid: &[f64],
    seed: u64,
) -> Result<f64> {
    Ok(policy_present_values(portfolio, q_path, contract, time_grid, seed)?
        .iter()
        .sum())
}

/// Law-of-large-numbers approximation of the portfolio present value:
/// active count times the per-policy functional V.
pub fn lln_pv(active_count: usize, v: f64) -> f64 {
    active_count as f64 * v
}

/// Approximate portfolio p-quantile: positive homogeneity of the quantile
/// function turns the LLN sum into active count times the V quantile.
pub fn portfolio_quantile(
    active_count: usize,
    dist: &EmpiricalDistribution,
    p: f64,
) -> Result<f64> {
    Ok(active_count as f64 * dist.quantile(p)?)
}

/// Portfolio reserve: the money allocated per active policy is E[V | env],
/// estimated by the PDE first moment or the Monte Carlo mean.
pub fn portfolio_reserve(active_count: usize, mean_v: f64) -> f64 {
    active_count as f64 * mean_v
}
