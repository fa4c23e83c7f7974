//! Termination-intensity model for disability annuities.
//!
//! The hazard of a disabled policyholder recovering (or dying) is driven by a
//! logistic GLM score Z_t = a(t)ᵀν_t, where ν is the vector of GLM
//! parameters following a Gaussian random walk with drift, and a(t) collects
//! the basis-function loadings for a fixed inception age. The intensity is
//! the softplus transform of the score, so that the per-period termination
//! probability is exactly the logistic probability of the GLM.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Affine function of inception age: φ(x) = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeTerm {
    pub intercept: f64,
    pub slope: f64,
}

impl AgeTerm {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Time basis function with an analytic first derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeTerm {
    /// ψ(t) = 1
    Constant,
    /// ψ(t) = t
    Linear,
    /// ψ(t) = exp(−rate·t)
    Exponential { rate: f64 },
}

impl TimeTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeTerm::Constant => 1.0,
            TimeTerm::Linear => t,
            TimeTerm::Exponential { rate } => (-rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeTerm::Constant => 0.0,
            TimeTerm::Linear => 1.0,
            TimeTerm::Exponential { rate } => -rate * (-rate * t).exp(),
        }
    }

    /// True when the derivative does not depend on t.
    pub fn has_constant_derivative(&self) -> bool {
        matches!(self, TimeTerm::Constant | TimeTerm::Linear)
    }
}

/// Basis functions of the GLM score: n age terms × m time terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub age_terms: Vec<AgeTerm>,
    pub time_terms: Vec<TimeTerm>,
}

impl BasisSet {
    pub fn new(age_terms: Vec<AgeTerm>, time_terms: Vec<TimeTerm>) -> Result<Self> {
        if age_terms.is_empty() || time_terms.is_empty() {
            return Err(Error::InvalidParameter(
                "basis needs at least one age term and one time term".into(),
            ));
        }
        for term in &time_terms {
            if let TimeTerm::Exponential { rate } = term {
                if !rate.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "exponential time term has non-finite rate {rate}"
                    )));
                }
            }
        }
        Ok(BasisSet {
            age_terms,
            time_terms,
        })
    }

    /// φ¹ = (64−x)/39, φ² = (x−25)/39 shared by both shipped families.
    fn standard_age_terms() -> Vec<AgeTerm> {
        vec![
            AgeTerm {
                intercept: 64.0 / 39.0,
                slope: -1.0 / 39.0,
            },
            AgeTerm {
                intercept: -25.0 / 39.0,
                slope: 1.0 / 39.0,
            },
        ]
    }

    /// Time terms {1, t}.
    pub fn linear() -> Self {
        BasisSet {
            age_terms: Self::standard_age_terms(),
            time_terms: vec![TimeTerm::Constant, TimeTerm::Linear],
        }
    }

    /// Time terms {1, e^{−t}, e^{−2t}}.
    pub fn exp3() -> Self {
        BasisSet {
            age_terms: Self::standard_age_terms(),
            time_terms: vec![
                TimeTerm::Constant,
                TimeTerm::Exponential { rate: 1.0 },
                TimeTerm::Exponential { rate: 2.0 },
            ],
        }
    }

    pub fn n_age(&self) -> usize {
        self.age_terms.len()
    }

    pub fn n_time(&self) -> usize {
        self.time_terms.len()
    }

    /// Parameter dimension n·m.
    pub fn dim(&self) -> usize {
        self.n_age() * self.n_time()
    }

    /// True when every time term has a t-independent derivative, which is
    /// what the exact two-dimensional Markov construction requires.
    pub fn is_markov_2d_compatible(&self) -> bool {
        self.time_terms.iter().all(|t| t.has_constant_derivative())
    }
}

/// Gaussian random-walk dynamics of the GLM parameter vector:
/// ν_t = ν₀ + μt + A W_t with A Aᵀ = Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkParams {
    pub nu0: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub chol: Matrix,
}

impl RandomWalkParams {
    pub fn new(nu0: Vec<f64>, mu: Vec<f64>, sigma: Matrix) -> Result<Self> {
        let dim = nu0.len();
        if mu.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: mu.len(),
            });
        }
        if sigma.rows() != dim || sigma.cols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: sigma.rows(),
            });
        }
        let chol = cholesky_psd(&sigma)?;
        Ok(RandomWalkParams {
            nu0,
            mu,
            sigma,
            chol,
        })
    }

    /// Frozen parameters: μ = 0, Σ = 0.
    pub fn deterministic(nu0: Vec<f64>) -> Self {
        let dim = nu0.len();
        RandomWalkParams {
            nu0,
            mu: vec![0.0; dim],
            sigma: Matrix::zeros(dim, dim),
            chol: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.nu0.len()
    }
}

/// Full termination-intensity model: basis, inception age, period length Δd
/// and the random-walk dynamics of ν.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    pub basis: BasisSet,
    pub x: f64,
    pub delta_d: f64,
    pub params: RandomWalkParams,
}

impl IntensityModel {
    pub fn new(basis: BasisSet, x: f64, delta_d: f64, params: RandomWalkParams) -> Result<Self> {
        if delta_d <= 0.0 || !delta_d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta_d must be positive, got {delta_d}"
            )));
        }
        if params.dim() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: params.dim(),
            });
        }
        Ok(IntensityModel {
            basis,
            x,
            delta_d,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Loading vector a(t) with component (i,j) = φ^i(x)·ψ^j(t), flattened
    /// row-major over (i, j).
    pub fn loading_vector(&self, t: f64) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.dim());
        for age in &self.basis.age_terms {
            let phi = age.eval(self.x);
            for time in &self.basis.time_terms {
                a.push(phi * time.eval(t));
            }
        }
        a
    }

    /// ȧ(t): analytic time derivative of the loading vector.
    pub fn loading_derivative(&self, t: f64) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.dim());
        for age in &self.basis.age_terms {
            let phi = age.eval(self.x);
            for time in &self.basis.time_terms {
                a.push(phi * time.derivative(t));
            }
        }
        a
    }

    /// GLM score Z = a(t)ᵀν.
    pub fn score(&self, t: f64, nu: &[f64]) -> Result<f64> {
        if nu.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: nu.len(),
            });
        }
        Ok(dot(&self.loading_vector(t), nu))
    }

    /// Intensity as a function of the score alone: f(z) = softplus(z)/Δd.
    pub fn env_intensity(&self, z: f64) -> f64 {
        softplus(z, self.delta_d)
    }

    /// Termination intensity q(t, ν) = f(a(t)ᵀν); strictly positive.
    pub fn intensity(&self, t: f64, nu: &[f64]) -> Result<f64> {
        Ok(self.env_intensity(self.score(t, nu)?))
    }

    /// Probability that the annuity terminates within [t, t+Δd): the
    /// logistic probability e^Z/(1+e^Z).
    pub fn termination_probability(&self, t: f64, nu: &[f64]) -> Result<f64> {
        let z = self.score(t, nu)?;
        Ok(logistic(z))
    }
}

/// Annuity contract: pays g(t) = g_const·e^{g_growth·t} per year until
/// termination or the horizon T, discounted at the constant short rate r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractSpec {
    pub horizon: f64,
    pub rate: f64,
    pub g_const: f64,
    pub g_growth: f64,
}

impl ContractSpec {
    pub fn new(horizon: f64, rate: f64, g_const: f64, g_growth: f64) -> Result<Self> {
        if horizon <= 0.0 || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if g_const < 0.0 || !g_const.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "g_const must be non-negative, got {g_const}"
            )));
        }
        if !rate.is_finite() || !g_growth.is_finite() {
            return Err(Error::InvalidParameter(
                "rate and growth must be finite".into(),
            ));
        }
        Ok(ContractSpec {
            horizon,
            rate,
            g_const,
            g_growth,
        })
    }

    /// Flat unit annuity over [0, T] at rate r.
    pub fn unit(horizon: f64, rate: f64) -> Self {
        ContractSpec {
            horizon,
            rate,
            g_const: 1.0,
            g_growth: 0.0,
        }
    }

    pub fn payment(&self, t: f64) -> f64 {
        self.g_const * (self.g_growth * t).exp()
    }

    /// Riskless annuity value ∫_t0^T g(s)e^{−r(s−t0)}ds, an upper bound for
    /// any present value under a non-negative intensity.
    pub fn annuity_bound(&self, t0: f64) -> f64 {
        // g(s)e^{-r(s-t0)} = g_const·e^{κ t0}·e^{(κ-r)(s-t0)}
        let span = self.horizon - t0;
        if span <= 0.0 {
            return 0.0;
        }
        let eff = self.g_growth - self.rate;
        let base = self.g_const * (self.g_growth * t0).exp();
        if eff.abs() < 1e-14 {
            base * span
        } else {
            base * ((eff * span).exp() - 1.0) / eff
        }
    }
}

/// Overflow-safe softplus link: f(z) = log(1 + e^z)/Δd.
pub fn softplus(z: f64, delta_d: f64) -> f64 {
    debug_assert!(delta_d > 0.0);
    if z > 30.0 {
        (z + (-z).exp().ln_1p()) / delta_d
    } else {
        z.exp().ln_1p() / delta_d
    }
}

/// Logistic function e^z/(1+e^z), stable for large |z|.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Estimate random-walk drift and covariance from K yearly parameter
/// vectors: μ is the sample mean of the K−1 first differences, Σ their
/// unbiased sample covariance (divisor K−2).
pub fn estimate_random_walk(series: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
    let k = series.len();
    if k < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 yearly observations to estimate drift and covariance, got {k}"
        )));
    }
    let dim = series[0].len();
    for (i, row) in series.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "row {} has length {}, expected {}",
                i,
                row.len(),
                dim
            )));
        }
    }

    let n_diffs = k - 1;
    let mut diffs = Vec::with_capacity(n_diffs);
    for w in series.windows(2) {
        let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
        diffs.push(d);
    }

    let mut mu = vec![0.0; dim];
    for d in &diffs {
        for (m, v) in mu.iter_mut().zip(d) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n_diffs as f64;
    }

    let mut sigma = Matrix::zeros(dim, dim);
    for d in &diffs {
        for i in 0..dim {
            let ci = d[i] - mu[i];
            for j in 0..dim {
                sigma[(i, j)] += ci * (d[j] - mu[j]);
            }
        }
    }
    let divisor = (n_diffs - 1) as f64;
    for i in 0..dim {
        for j in 0..dim {
            sigma[(i, j)] /= divisor;
        }
    }
    Ok((mu, sigma))
}

/// Cholesky factorization tolerant of positive semi-definite input.
///
/// Returns lower-triangular A with AAᵀ = Σ' where Σ' = Σ when the plain
/// factorization succeeds, otherwise Σ + ε·I with ε = 1e−12·trace(Σ). A
/// negative eigenvalue beyond that budget is an error.
pub fn cholesky_psd(sigma: &Matrix) -> Result<Matrix> {
    if !sigma.is_square() {
        return Err(Error::Shape(format!(
            "covariance must be square, got {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    if !sigma.is_symmetric(1e-12 * (1.0 + sigma.trace().abs())) {
        return Err(Error::NotPsd("covariance is not symmetric".into()));
    }
    match try_cholesky(sigma, 0.0) {
        Some(chol) => Ok(chol),
        None => {
            let eps = 1e-12 * sigma.trace();
            try_cholesky(sigma, eps).ok_or_else(|| {
                Error::NotPsd(
                    "factorization failed even after diagonal regularization".into(),
                )
            })
        }
    }
}

fn try_cholesky(sigma: &Matrix, eps: f64) -> Option<Matrix> {
    let n = sigma.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = sigma[(j, j)] + eps;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > 0.0 {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = sigma[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d == 0.0 {
            // Exactly semi-definite pivot (zero matrix, exact rank
            // deficiency): the rest of the column must vanish too.
            for i in (j + 1)..n {
                let mut s = sigma[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s != 0.0 {
                    return None;
                }
            }
        } else {
            // Rounding-level negatives are handled by the caller's ridge.
            return None;
        }
    }
    Some(l)
}
