//! Markov representations of the scalar environment process Z_t = a(t)ᵀν_t.
//!
//! Z itself is not Markov because the loading vector a depends on time. Two
//! reductions are provided:
//!
//! * an exact two-dimensional Markov system (Z, ȧᵀν), available when every
//!   time term has a constant derivative (constant or linear terms), and
//! * a one-dimensional mimicking diffusion whose marginal distributions
//!   match those of Z for every t. Matching marginals of Z does not make
//!   the present-value distributions identical, so this representation is
//!   tagged as an approximation everywhere it appears.

use crate::error::{Error, Result};
use crate::model::IntensityModel;

/// Which Markov representation a coefficient descriptor encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    /// One-dimensional mimicking diffusion (marginal-matching approximation).
    Mimicked1d,
    /// Exact two-dimensional Markov system for constant/linear time terms.
    Markov2d,
}

/// Drift/diffusion coefficient descriptor for a Markov environment process.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    model: IntensityModel,
    kind: SpecKind,
    initial_state: Vec<f64>,
}

impl DiffusionSpec {
    pub fn kind(&self) -> SpecKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SpecKind::Mimicked1d => 1,
            SpecKind::Markov2d => 2,
        }
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn model(&self) -> &IntensityModel {
        &self.model
    }

    /// Drift vector at (t, state), written into `out`.
    pub fn drift(&self, t: f64, state: &[f64], out: &mut [f64]) {
        match self.kind {
            SpecKind::Mimicked1d => {
                out[0] = alpha_1d(&self.model, t, state[0]);
            }
            SpecKind::Markov2d => {
                let a = self.model.loading_vector(t);
                let da = self.model.loading_derivative(t);
                let mu = &self.model.params.mu;
                out[0] = state[1] + dot(&a, mu);
                out[1] = dot(&da, mu);
            }
        }
    }

    /// Lower-triangular diffusion factor at t (row-major dim×dim), written
    /// into `out`; out·outᵀ equals the instantaneous covariance matrix.
    pub fn diffusion_factor(&self, t: f64, out: &mut [f64]) {
        match self.kind {
            SpecKind::Mimicked1d => {
                out[0] = gamma_1d(&self.model, t);
            }
            SpecKind::Markov2d => {
                let (c11, c12, c22) = self.covariance_2d(t);
                let (b11, b21, b22) = cholesky_2x2(c11, c12, c22);
                out[0] = b11;
                out[1] = 0.0;
                out[2] = b21;
                out[3] = b22;
            }
        }
    }

    /// Instantaneous covariance (aᵀΣa, aᵀΣȧ, ȧᵀΣȧ) of the 2-D system.
    pub fn covariance_2d(&self, t: f64) -> (f64, f64, f64) {
        let a = self.model.loading_vector(t);
        let da = self.model.loading_derivative(t);
        let sigma = &self.model.params.sigma;
        (
            sigma.quad_form(&a, &a),
            sigma.quad_form(&a, &da),
            sigma.quad_form(&da, &da),
        )
    }
}

/// Closed-form Cholesky factor of [[c11, c12],[c12, c22]]; the first row is
/// zero when c11 vanishes.
fn cholesky_2x2(c11: f64, c12: f64, c22: f64) -> (f64, f64, f64) {
    if c11 <= 0.0 {
        return (0.0, 0.0, c22.max(0.0).sqrt());
    }
    let b11 = c11.sqrt();
    let b21 = c12 / b11;
    let b22 = (c22 - b21 * b21).max(0.0).sqrt();
    (b11, b21, b22)
}

/// Diffusion coefficient of the mimicking process: γ(t) = √(a(t)ᵀΣa(t)).
pub fn gamma_1d(model: &IntensityModel, t: f64) -> f64 {
    let a = model.loading_vector(t);
    model.params.sigma.quad_form(&a, &a).max(0.0).sqrt()
}

/// Drift of the mimicking process:
/// α(t, z) = aᵀμ + ȧᵀ(ν₀+μt) + (z − aᵀ(ν₀+μt))·aᵀΣȧ/(aᵀΣa).
///
/// When aᵀΣa degenerates, Z_t equals its mean almost surely and the
/// conditional term is zero.
pub fn alpha_1d(model: &IntensityModel, t: f64, z: f64) -> f64 {
    let (intercept, slope) = alpha_affine(model, t);
    intercept + slope * z
}

/// α(t, ·) is affine in z; returns (intercept, slope). The path simulators
/// and the PDE assembler consume this form directly, one evaluation per
/// time level.
pub(crate) fn alpha_affine(model: &IntensityModel, t: f64) -> (f64, f64) {
    let a = model.loading_vector(t);
    let da = model.loading_derivative(t);
    let mu = &model.params.mu;
    let nu0 = &model.params.nu0;
    let sigma = &model.params.sigma;

    let mean_nu: Vec<f64> = nu0.iter().zip(mu).map(|(n, m)| n + m * t).collect();
    let base = dot(&a, mu) + dot(&da, &mean_nu);

    let var_a = sigma.quad_form(&a, &a);
    let norm_a_sq = dot(&a, &a);
    let degenerate = var_a < 1e-14 * (norm_a_sq * sigma.trace() + 1e-300);
    if degenerate {
        (base, 0.0)
    } else {
        let slope = sigma.quad_form(&a, &da) / var_a;
        (base - slope * dot(&a, &mean_nu), slope)
    }
}

/// Exact two-dimensional Markov representation (Z, ȧᵀν).
///
/// Requires every time term to be constant or linear; otherwise ȧᵀν is not
/// a closed component and the construction does not apply.
pub fn markov_2d(model: &IntensityModel) -> Result<DiffusionSpec> {
    if !model.basis.is_markov_2d_compatible() {
        return Err(Error::UnsupportedBasis(
            "the exact 2-D Markov construction needs constant or linear time terms".into(),
        ));
    }
    let a0 = model.loading_vector(0.0);
    let da0 = model.loading_derivative(0.0);
    let nu0 = &model.params.nu0;
    Ok(DiffusionSpec {
        model: model.clone(),
        kind: SpecKind::Markov2d,
        initial_state: vec![dot(&a0, nu0), dot(&da0, nu0)],
    })
}

/// One-dimensional mimicking diffusion of Z.
pub fn mimic_1d(model: &IntensityModel) -> DiffusionSpec {
    let a0 = model.loading_vector(0.0);
    let z0 = dot(&a0, &model.params.nu0);
    DiffusionSpec {
        model: model.clone(),
        kind: SpecKind::Mimicked1d,
        initial_state: vec![z0],
    }
}

/// Exact Gaussian marginal of Z_t: mean a(t)ᵀ(ν₀+μt), variance t·a(t)ᵀΣa(t).
pub fn z_marginal_stats(model: &IntensityModel, t: f64) -> (f64, f64) {
    let a = model.loading_vector(t);
    let mean_nu: Vec<f64> = model
        .params
        .nu0
        .iter()
        .zip(&model.params.mu)
        .map(|(n, m)| n + m * t)
        .collect();
    let mean = dot(&a, &mean_nu);
    let var = t * model.params.sigma.quad_form(&a, &a);
    (mean, var.max(0.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
