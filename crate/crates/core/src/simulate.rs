//! Monte Carlo engine for present values of annuities.
//!
//! Paths of the parameter random walk use exact Gaussian increments (the
//! dynamics are Gaussian, so the grid introduces no bias in ν itself);
//! reduced Markov representations are discretized with explicit
//! Euler-Maruyama. Per-path randomness is a pure function of
//! (seed, path index) and reductions run in canonical path order, so output
//! is bit-identical regardless of the degree of parallelism.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ContractSpec, IntensityModel};
use crate::projection::{DiffusionSpec, SpecKind};
use crate::rng::PathRng;

/// Monte Carlo run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Valuation time; the grid runs from here to the contract horizon.
    pub t0: f64,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            n_paths,
            dt,
            seed,
            t0: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Uniform grid t0 = s₀ < … < s_K = horizon. The span must be an
    /// integer multiple of dt within 1e−9.
    pub fn time_grid(&self, horizon: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let span = horizon - self.t0;
        if span < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} precedes valuation time {}",
                self.t0
            )));
        }
        let steps_f = span / self.dt;
        let steps = steps_f.round();
        if (steps_f - steps).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "horizon − t0 = {span} is not an integer multiple of dt = {}",
                self.dt
            )));
        }
        let steps = steps as usize;
        let mut grid: Vec<f64> = (0..=steps).map(|k| self.t0 + k as f64 * self.dt).collect();
        grid[steps] = horizon;
        Ok(grid)
    }
}

/// Provenance of a batch of simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSource {
    NuExact,
    Euler1d,
    Euler2d,
}

/// A batch of discretized paths with its time grid and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub time_grid: Vec<f64>,
    pub dim: usize,
    pub n_paths: usize,
    pub source: PathSource,
    data: Vec<f64>,
}

impl PathSet {
    /// State vector of one path at one grid node.
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let stride = self.time_grid.len() * self.dim;
        let offset = path * stride + step * self.dim;
        &self.data[offset..offset + self.dim]
    }

    pub fn n_steps(&self) -> usize {
        self.time_grid.len() - 1
    }
}

/// Exact-increment simulation of the parameter random walk
/// ν_{s+dt} = ν_s + μ·dt + A·ξ·√dt.
pub fn simulate_nu_paths(
    model: &IntensityModel,
    cfg: &SimConfig,
    horizon: f64,
) -> Result<PathSet> {
    let grid = cfg.time_grid(horizon)?;
    let dim = model.dim();
    let n_nodes = grid.len();
    let stride = n_nodes * dim;
    let mut data = vec![0.0; cfg.n_paths * stride];
    let chol_sqdt = scaled_chol(model, cfg.dt);
    let mu_dt: Vec<f64> = model.params.mu.iter().map(|m| m * cfg.dt).collect();
    let seed = cfg.seed;
    let nu0 = model.params.nu0.clone();

    data.par_chunks_mut(stride).enumerate().for_each(|(p, chunk)| {
        let mut rng = PathRng::new(seed, p as u64);
        let mut xi = vec![0.0; dim];
        chunk[..dim].copy_from_slice(&nu0);
        for k in 1..n_nodes {
            rng.fill_normals(&mut xi);
            let (prev, cur) = chunk.split_at_mut(k * dim);
            let prev = &prev[(k - 1) * dim..];
            for i in 0..dim {
                let mut v = prev[i] + mu_dt[i];
                for j in 0..=i {
                    v += chol_sqdt[i * dim + j] * xi[j];
                }
                cur[i] = v;
            }
        }
    });

    Ok(PathSet {
        time_grid: grid,
        dim,
        n_paths: cfg.n_paths,
        source: PathSource::NuExact,
        data,
    })
}

/// Explicit Euler-Maruyama simulation of a reduced Markov representation.
pub fn simulate_diffusion_paths(
    spec: &DiffusionSpec,
    cfg: &SimConfig,
    horizon: f64,
) -> Result<PathSet> {
    let grid = cfg.time_grid(horizon)?;
    let dim = spec.dim();
    let n_nodes = grid.len();
    let stride = n_nodes * dim;
    let mut data = vec![0.0; cfg.n_paths * stride];
    let coeffs = euler_tables(spec, &grid, cfg.dt);
    let seed = cfg.seed;
    let z0 = spec.initial_state().to_vec();
    let dt = cfg.dt;

    data.par_chunks_mut(stride).enumerate().for_each(|(p, chunk)| {
        let mut rng = PathRng::new(seed, p as u64);
        chunk[..dim].copy_from_slice(&z0);
        let mut state = [z0[0], if dim == 2 { z0[1] } else { 0.0 }];
        for (k, c) in coeffs.iter().enumerate() {
            euler_step(&mut state, c, dt, &mut rng);
            let cur = &mut chunk[(k + 1) * dim..(k + 2) * dim];
            cur.copy_from_slice(&state[..dim]);
        }
    });

    let source = if dim == 1 {
        PathSource::Euler1d
    } else {
        PathSource::Euler2d
    };
    Ok(PathSet {
        time_grid: grid,
        dim,
        n_paths: cfg.n_paths,
        source,
        data,
    })
}

/// Euler-Maruyama simulation keeping only the state at the horizon, for
/// marginal-distribution checks on large batches where materializing whole
/// paths is wasteful. Path p reproduces path p of
/// [`simulate_diffusion_paths`] exactly.
pub fn simulate_terminal_states(
    spec: &DiffusionSpec,
    cfg: &SimConfig,
    horizon: f64,
) -> Result<Vec<f64>> {
    let grid = cfg.time_grid(horizon)?;
    let dim = spec.dim();
    let coeffs = euler_tables(spec, &grid, cfg.dt);
    let seed = cfg.seed;
    let z0 = spec.initial_state().to_vec();
    let dt = cfg.dt;
    let mut out = vec![0.0; cfg.n_paths * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(p, slot)| {
        let mut rng = PathRng::new(seed, p as u64);
        let mut state = [z0[0], if dim == 2 { z0[1] } else { 0.0 }];
        for c in &coeffs {
            euler_step(&mut state, c, dt, &mut rng);
        }
        slot.copy_from_slice(&state[..dim]);
    });
    Ok(out)
}

/// Per-step Euler coefficients, evaluated once per time level.
enum StepCoeffs {
    /// dZ = (c0 + c1·Z)dt + γ√dt·ξ
    One { c0: f64, c1: f64, gamma_sqdt: f64 },
    /// dZ¹ = (Z² + aᵀμ)dt + noise, dZ² = ȧᵀμ dt + noise with 2×2 factor B√dt
    Two {
        a_mu: f64,
        da_mu: f64,
        b11: f64,
        b21: f64,
        b22: f64,
    },
}

fn euler_tables(spec: &DiffusionSpec, grid: &[f64], dt: f64) -> Vec<StepCoeffs> {
    let sqdt = dt.sqrt();
    let model = spec.model();
    grid[..grid.len() - 1]
        .iter()
        .map(|&t| match spec.kind() {
            SpecKind::Mimicked1d => {
                let (c0, c1) = crate::projection::alpha_affine(model, t);
                StepCoeffs::One {
                    c0,
                    c1,
                    gamma_sqdt: crate::projection::gamma_1d(model, t) * sqdt,
                }
            }
            SpecKind::Markov2d => {
                let a = model.loading_vector(t);
                let da = model.loading_derivative(t);
                let mu = &model.params.mu;
                let mut factor = [0.0; 4];
                spec.diffusion_factor(t, &mut factor);
                StepCoeffs::Two {
                    a_mu: dot(&a, mu),
                    da_mu: dot(&da, mu),
                    b11: factor[0] * sqdt,
                    b21: factor[2] * sqdt,
                    b22: factor[3] * sqdt,
                }
            }
        })
        .collect()
}

#[inline]
fn euler_step(state: &mut [f64; 2], c: &StepCoeffs, dt: f64, rng: &mut PathRng) {
    match c {
        StepCoeffs::One { c0, c1, gamma_sqdt } => {
            let xi = rng.next_normal();
            state[0] += (c0 + c1 * state[0]) * dt + gamma_sqdt * xi;
        }
        StepCoeffs::Two {
            a_mu,
            da_mu,
            b11,
            b21,
            b22,
        } => {
            let xi1 = rng.next_normal();
            let xi2 = rng.next_normal();
            let dz1 = (state[1] + a_mu) * dt + b11 * xi1;
            let dz2 = da_mu * dt + b21 * xi1 + b22 * xi2;
            state[0] += dz1;
            state[1] += dz2;
        }
    }
}

fn scaled_chol(model: &IntensityModel, dt: f64) -> Vec<f64> {
    let dim = model.dim();
    let sqdt = dt.sqrt();
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            out[i * dim + j] = model.params.chol[(i, j)] * sqdt;
        }
    }
    out
}

/// Present value of the annuity along one intensity path: trapezoidal
/// quadrature of ∫_t0^T g(s)·e^{−∫q}·e^{−r(s−t0)} ds on the grid nodes.
pub fn present_value(
    q_path: &[f64],
    contract: &ContractSpec,
    time_grid: &[f64],
) -> Result<f64> {
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
    let mut cum_q = 0.0;
    let mut prev_h = contract.payment(t0);
    let mut pv = 0.0;
    for k in 1..time_grid.len() {
        let dt_k = time_grid[k] - time_grid[k - 1];
        cum_q += 0.5 * (q_path[k - 1] + q_path[k]) * dt_k;
        let h = contract.payment(time_grid[k])
            * (-cum_q - contract.rate * (time_grid[k] - t0)).exp();
        pv += 0.5 * (prev_h + h) * dt_k;
        prev_h = h;
    }
    Ok(pv)
}

/// What drives the environment when sampling present values.
#[derive(Debug, Clone, Copy)]
pub enum PvSource<'a> {
    /// Full parameter random walk with exact increments; q_s = f(a(s)ᵀν_s).
    Model(&'a IntensityModel),
    /// Reduced Markov representation via Euler; q_s = f(Ẑ_s) (first
    /// component for the 2-D system).
    Spec(&'a DiffusionSpec),
}

/// Present value of every path, in path order (unsorted). Pure function of
/// (seed, path index) per path.
pub fn present_values_per_path(
    source: PvSource,
    contract: &ContractSpec,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    let grid = cfg.time_grid(contract.horizon)?;
    let n_nodes = grid.len();
    let t0 = grid[0];
    // g(s)·e^{−r(s−t0)} per node; the survival factor is path-dependent.
    let gdisc: Vec<f64> = grid
        .iter()
        .map(|&s| contract.payment(s) * (-contract.rate * (s - t0)).exp())
        .collect();
    let dt = cfg.dt;
    let seed = cfg.seed;

    let values: Vec<f64> = match source {
        PvSource::Model(model) => {
            let dim = model.dim();
            let chol_sqdt = scaled_chol(model, dt);
            let mu_dt: Vec<f64> = model.params.mu.iter().map(|m| m * dt).collect();
            let a_table: Vec<f64> = grid
                .iter()
                .flat_map(|&s| model.loading_vector(s))
                .collect();
            let nu0 = model.params.nu0.clone();
            (0..cfg.n_paths)
                .into_par_iter()
                .map_init(
                    || (vec![0.0; dim], vec![0.0; dim]),
                    |(nu, xi), p| {
                        let mut rng = PathRng::new(seed, p as u64);
                        nu.copy_from_slice(&nu0);
                        let q0 = model.env_intensity(dot(&a_table[..dim], nu));
                        let mut acc = PvAccumulator::new(q0, gdisc[0]);
                        for k in 1..n_nodes {
                            rng.fill_normals(xi);
                            for i in 0..dim {
                                let mut v = nu[i] + mu_dt[i];
                                for j in 0..=i {
                                    v += chol_sqdt[i * dim + j] * xi[j];
                                }
                                nu[i] = v;
                            }
                            let a_k = &a_table[k * dim..(k + 1) * dim];
                            let q = model.env_intensity(dot(a_k, nu));
                            acc.push(q, gdisc[k], dt);
                        }
                        acc.pv
                    },
                )
                .collect()
        }
        PvSource::Spec(spec) => {
            let coeffs = euler_tables(spec, &grid, dt);
            let model = spec.model();
            let z0 = spec.initial_state().to_vec();
            let dim = spec.dim();
            (0..cfg.n_paths)
                .into_par_iter()
                .map(|p| {
                    let mut rng = PathRng::new(seed, p as u64);
                    let mut state = [z0[0], if dim == 2 { z0[1] } else { 0.0 }];
                    let q0 = model.env_intensity(state[0]);
                    let mut acc = PvAccumulator::new(q0, gdisc[0]);
                    for (k, c) in coeffs.iter().enumerate() {
                        euler_step(&mut state, c, dt, &mut rng);
                        let q = model.env_intensity(state[0]);
                        acc.push(q, gdisc[k + 1], dt);
                    }
                    acc.pv
                })
                .collect()
        }
    };
    Ok(values)
}

/// Streaming trapezoid evaluation of the present-value functional.
struct PvAccumulator {
    cum_q: f64,
    prev_q: f64,
    prev_h: f64,
    pv: f64,
}

impl PvAccumulator {
    fn new(q0: f64, gdisc0: f64) -> Self {
        PvAccumulator {
            cum_q: 0.0,
            prev_q: q0,
            prev_h: gdisc0,
            pv: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, q: f64, gdisc: f64, dt: f64) {
        self.cum_q += 0.5 * (self.prev_q + q) * dt;
        let h = gdisc * (-self.cum_q).exp();
        self.pv += 0.5 * (self.prev_h + h) * dt;
        self.prev_q = q;
        self.prev_h = h;
    }
}

/// Simulate paths, evaluate the present value on each, return the sorted
/// empirical distribution.
pub fn sample_present_values(
    source: PvSource,
    contract: &ContractSpec,
    cfg: &SimConfig,
) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_sample(present_values_per_path(source, contract, cfg)?)
}

/// Simulate terminations for n_policies sharing one intensity path, each
/// with its own (seed, policy) stream. An active policy terminates during
/// step k (between nodes k and k+1) with probability 1 − e^{−q_k·dt}, using
/// the left-endpoint intensity; returns the step index, or None for
/// policies surviving to the horizon.
pub fn thinning_events(
    q_path: &[f64],
    time_grid: &[f64],
    n_policies: usize,
    seed: u64,
) -> Vec<Option<usize>> {
    let n_steps = time_grid.len().saturating_sub(1);
    (0..n_policies)
        .into_par_iter()
        .map(|policy| {
            let mut rng = PathRng::new(seed, policy as u64);
            for k in 0..n_steps {
                let dt_k = time_grid[k + 1] - time_grid[k];
                let p_term = -(-q_path[k] * dt_k).exp_m1();
                if rng.next_uniform() < p_term {
                    return Some(k);
                }
            }
            None
        })
        .collect()
}

/// Sorted sample of present values with distribution accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sample: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_sample(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("sample contains non-finite values".into()));
        }
        sample.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sample })
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn min(&self) -> f64 {
        self.sample[0]
    }

    pub fn max(&self) -> f64 {
        self.sample[self.sample.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.sample.iter().sum::<f64>() / self.n() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Right-continuous empirical CDF: fraction of the sample ≤ x.
    pub fn ecdf(&self, x: f64) -> f64 {
        let idx = self.sample.partition_point(|&v| v <= x);
        idx as f64 / self.n() as f64
    }

    /// Lower empirical quantile sample[⌈p·n⌉ − 1]; positively homogeneous.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must be in (0, 1], got {p}"
            )));
        }
        let pn = p * self.n() as f64;
        // Guard against the product landing epsilon above an integer.
        let k = (pn - 1e-9).ceil().max(1.0) as usize;
        Ok(self.sample[k - 1])
    }

    /// k-th moment estimate with a normal-approximation confidence interval:
    /// (estimate, low, high).
    pub fn moment_ci(&self, k: u32, level: f64) -> Result<(f64, f64, f64)> {
        if self.n() < 2 {
            return Err(Error::InsufficientData(
                "confidence interval needs at least 2 observations".into(),
            ));
        }
        if k < 1 {
            return Err(Error::InvalidParameter("moment order must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&level) {
            return Err(Error::Domain(format!(
                "confidence level must be in [0, 1), got {level}"
            )));
        }
        let n = self.n() as f64;
        let powers: Vec<f64> = self.sample.iter().map(|v| v.powi(k as i32)).collect();
        let mean = powers.iter().sum::<f64>() / n;
        let var = powers.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let z = inverse_normal_cdf((1.0 + level) / 2.0);
        let half = z * (var / n).sqrt();
        Ok((mean, mean - half, mean + half))
    }
}

/// Two-sample Kolmogorov-Smirnov test: exact statistic by merge scan,
/// p-value from the asymptotic Kolmogorov distribution.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> (f64, f64) {
    let xs = a.sample();
    let ys = b.sample();
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let lambda = d * (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_survival(lambda))
}

/// Q(λ) = 2·Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}, truncated when terms drop below
/// 1e−12.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..100_000 {
        let term = 2.0 * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    sum.clamp(0.0, 1.0)
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e−9).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
