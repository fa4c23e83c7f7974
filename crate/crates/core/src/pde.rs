//! First-order implicit finite-difference solver for the iterated backward
//! moment PDEs in the mimicked one-dimensional coordinates:
//!
//!   −∂v_n/∂s + n(f(z)+r)v_n = α(s,z)·∂v_n/∂z + ½γ²(s)·∂²v_n/∂z² + n·g(s)·v_{n−1}
//!
//! with v_n(T, z) = 0 and v₀ ≡ 1. Each backward step solves one tridiagonal
//! system; the drift term is centrally differenced in the interior, and the
//! two boundary nodes follow the z-local reaction ODE (the moment functions
//! flatten in z at the far field, where the drift magnitude would otherwise
//! destabilize a one-sided stencil).

use crate::error::{Error, Result};
use crate::model::{ContractSpec, IntensityModel};
use crate::projection::{alpha_affine, gamma_1d, z_marginal_stats, DiffusionSpec, SpecKind};

/// Uniform space-time grid for the 1-D moment solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
    pub dt: f64,
    pub t0: f64,
    pub horizon: f64,
    n_z: usize,
    n_t: usize,
}

impl Grid1D {
    pub fn new(z_min: f64, z_max: f64, dz: f64, t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(dz > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid steps must be positive, got dz={dz}, dt={dt}"
            )));
        }
        if z_min >= z_max {
            return Err(Error::InvalidParameter(format!(
                "z_min {z_min} must be below z_max {z_max}"
            )));
        }
        if horizon < t0 {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} precedes t0 {t0}"
            )));
        }
        let nz_f = (z_max - z_min) / dz;
        if (nz_f - nz_f.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "(z_max − z_min)/dz = {nz_f} is not an integer"
            )));
        }
        let nt_f = (horizon - t0) / dt;
        if (nt_f - nt_f.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "(horizon − t0)/dt = {nt_f} is not an integer"
            )));
        }
        Ok(Grid1D {
            z_min,
            z_max,
            dz,
            dt,
            t0,
            horizon,
            n_z: nz_f.round() as usize + 1,
            n_t: nt_f.round() as usize + 1,
        })
    }

    /// Number of space nodes.
    pub fn n_z(&self) -> usize {
        self.n_z
    }

    /// Number of time levels (t0 and horizon included).
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn z_node(&self, i: usize) -> f64 {
        if i + 1 == self.n_z {
            self.z_max
        } else {
            self.z_min + i as f64 * self.dz
        }
    }

    pub fn t_node(&self, k: usize) -> f64 {
        if k + 1 == self.n_t {
            self.horizon
        } else {
            self.t0 + k as f64 * self.dt
        }
    }
}

/// Space-time array of one moment function v_n.
#[derive(Debug, Clone)]
pub struct MomentGrid {
    pub order: u32,
    pub grid: Grid1D,
    /// Largest cell Péclet number |α|·dz/γ² seen while assembling; above 2
    /// the central drift stencil may oscillate.
    pub max_cell_peclet: f64,
    values: Vec<f64>,
}

impl MomentGrid {
    /// v₀ ≡ 1, the seed of the moment chain.
    pub fn constant_one(grid: &Grid1D) -> Self {
        MomentGrid {
            order: 0,
            grid: grid.clone(),
            max_cell_peclet: 0.0,
            values: vec![1.0; grid.n_t() * grid.n_z()],
        }
    }

    pub fn value(&self, time_level: usize, z_index: usize) -> f64 {
        self.values[time_level * self.grid.n_z() + z_index]
    }

    pub fn level(&self, time_level: usize) -> &[f64] {
        let nz = self.grid.n_z();
        &self.values[time_level * nz..(time_level + 1) * nz]
    }

    /// Bilinear interpolation on the space-time lattice; exact at nodes, no
    /// extrapolation outside the hull.
    pub fn interpolate(&self, t: f64, z: f64) -> Result<f64> {
        let g = &self.grid;
        let slack_t = 1e-9 * (1.0 + g.dt);
        let slack_z = 1e-9 * (1.0 + g.dz);
        if t < g.t0 - slack_t || t > g.horizon + slack_t {
            return Err(Error::Domain(format!(
                "t = {t} outside [{}, {}]",
                g.t0, g.horizon
            )));
        }
        if z < g.z_min - slack_z || z > g.z_max + slack_z {
            return Err(Error::Domain(format!(
                "z = {z} outside [{}, {}]",
                g.z_min, g.z_max
            )));
        }
        let ft = ((t - g.t0) / g.dt).clamp(0.0, (g.n_t - 1) as f64);
        let fz = ((z - g.z_min) / g.dz).clamp(0.0, (g.n_z - 1) as f64);
        let it = (ft.floor() as usize).min(g.n_t - 1);
        let iz = (fz.floor() as usize).min(g.n_z - 1);
        let it1 = (it + 1).min(g.n_t - 1);
        let iz1 = (iz + 1).min(g.n_z - 1);
        let wt = ft - it as f64;
        let wz = fz - iz as f64;
        Ok(self.value(it, iz) * (1.0 - wt) * (1.0 - wz)
            + self.value(it, iz1) * (1.0 - wt) * wz
            + self.value(it1, iz) * wt * (1.0 - wz)
            + self.value(it1, iz1) * wt * wz)
    }
}

/// Computational domain for the moment solver: the mean trajectory of Z
/// padded by k_sigma standard deviations (one dz when the variance is
/// identically zero), rounded outward onto the dz lattice anchored at z₀.
pub fn build_grid(
    spec: &DiffusionSpec,
    model: &IntensityModel,
    contract: &ContractSpec,
    k_sigma: f64,
    dz: f64,
    dt: f64,
) -> Result<Grid1D> {
    if spec.dim() != 1 {
        return Err(Error::InvalidParameter(
            "the moment solver runs in one space dimension".into(),
        ));
    }
    if !(k_sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    if !(dz > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid steps must be positive, got dz={dz}, dt={dt}"
        )));
    }
    let t0 = 0.0;
    let horizon = contract.horizon;
    let nt_f = (horizon - t0) / dt;
    if (nt_f - nt_f.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "(horizon − t0)/dt = {nt_f} is not an integer"
        )));
    }
    let n_scan = (nt_f.round() as usize).max(1);
    let mut m_lo = f64::INFINITY;
    let mut m_hi = f64::NEG_INFINITY;
    let mut s_max: f64 = 0.0;
    for k in 0..=n_scan {
        let t = t0 + (horizon - t0) * k as f64 / n_scan as f64;
        let (mean, var) = z_marginal_stats(model, t);
        m_lo = m_lo.min(mean);
        m_hi = m_hi.max(mean);
        s_max = s_max.max(var.sqrt());
    }
    let z0 = spec.initial_state()[0];
    let (z_lo, z_hi) = if s_max == 0.0 {
        (m_lo - dz, m_hi + dz)
    } else {
        (m_lo - k_sigma * s_max, m_hi + k_sigma * s_max)
    };
    let n_lo = (((z0 - z_lo) / dz - 1e-9).ceil()).max(1.0);
    let n_hi = (((z_hi - z0) / dz - 1e-9).ceil()).max(1.0);
    Grid1D::new(
        z0 - n_lo * dz,
        z0 + n_hi * dz,
        dz,
        t0,
        horizon,
        dt,
    )
}

/// One link of the moment chain: backward implicit Euler from v_n(T,·) = 0
/// given v_{n−1} on the same grid. Returns the full space-time array.
pub fn solve_moment(
    order: u32,
    prev: &MomentGrid,
    spec: &DiffusionSpec,
    model: &IntensityModel,
    contract: &ContractSpec,
    grid: &Grid1D,
) -> Result<MomentGrid> {
    if order == 0 {
        return Err(Error::InvalidParameter(
            "moment order must be at least 1".into(),
        ));
    }
    if prev.order + 1 != order {
        return Err(Error::GridMismatch(format!(
            "previous moment has order {}, expected {}",
            prev.order,
            order - 1
        )));
    }
    if prev.grid != *grid {
        return Err(Error::GridMismatch(
            "previous moment lives on a different grid".into(),
        ));
    }
    if spec.kind() != SpecKind::Mimicked1d {
        return Err(Error::InvalidParameter(
            "the moment solver needs a one-dimensional diffusion descriptor".into(),
        ));
    }

    let nz = grid.n_z();
    let nt = grid.n_t();
    let dz = grid.dz;
    let dt = grid.dt;
    let n = order as f64;
    let proj_model = spec.model();

    // f(z) + r per space node; time-independent.
    let q_bar: Vec<f64> = (0..nz)
        .map(|i| model.env_intensity(grid.z_node(i)) + contract.rate)
        .collect();

    let mut values = vec![0.0; nt * nz];
    let mut lower = vec![0.0; nz - 1];
    let mut diag = vec![0.0; nz];
    let mut upper = vec![0.0; nz - 1];
    let mut rhs = vec![0.0; nz];
    let mut scratch = vec![0.0; 2 * nz];
    let mut max_peclet: f64 = 0.0;

    // Terminal level (index nt−1) is identically zero; march backward.
    for level in (0..nt.saturating_sub(1)).rev() {
        let s = grid.t_node(level);
        let (a_int, a_slope) = alpha_affine(proj_model, s);
        let gamma = gamma_1d(proj_model, s);
        let gamma_sq = gamma * gamma;
        let diffusion = 0.5 * gamma_sq * dt / (dz * dz);
        let g_s = contract.payment(s);
        let prev_level = prev.level(level);

        for i in 0..nz {
            let alpha = a_int + a_slope * grid.z_node(i);
            let peclet = if gamma_sq > 0.0 {
                alpha.abs() * dz / gamma_sq
            } else if alpha.abs() > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_peclet = max_peclet.max(peclet);

            let reaction = 1.0 + dt * n * q_bar[i];
            if i == 0 || i == nz - 1 {
                // Far-field rows: the solution is flat in z at the domain
                // edges (f saturates), so the boundary nodes follow the
                // z-local reaction ODE. This keeps the rows diagonally
                // dominant even where |α|·dt/dz is large, which the
                // one-sided advection stencil does not.
                diag[i] = reaction;
                if i == 0 {
                    upper[0] = 0.0;
                } else {
                    lower[i - 1] = 0.0;
                }
            } else {
                let advection = 0.5 * dt * alpha / dz;
                lower[i - 1] = advection - diffusion;
                diag[i] = reaction + 2.0 * diffusion;
                upper[i] = -advection - diffusion;
            }
            let next_value = values[(level + 1) * nz + i];
            rhs[i] = next_value + dt * n * g_s * prev_level[i];
        }

        let out = &mut values[level * nz..(level + 1) * nz];
        thomas_in_place(&lower, &diag, &upper, &rhs, &mut scratch, out)?;
    }

    Ok(MomentGrid {
        order,
        grid: grid.clone(),
        max_cell_peclet: max_peclet,
        values,
    })
}

/// Chain the moment solver from v₀ ≡ 1 up to order n_max; returns the full
/// grids and the point values at (t0, z₀) extracted by interpolation.
pub fn solve_moments(
    n_max: u32,
    spec: &DiffusionSpec,
    model: &IntensityModel,
    contract: &ContractSpec,
    grid: &Grid1D,
) -> Result<(Vec<MomentGrid>, Vec<f64>)> {
    if n_max < 1 {
        return Err(Error::InvalidParameter(
            "n_max must be at least 1".into(),
        ));
    }
    let z0 = spec.initial_state()[0];
    let mut prev = MomentGrid::constant_one(grid);
    let mut grids = Vec::with_capacity(n_max as usize);
    let mut point_values = Vec::with_capacity(n_max as usize);
    for order in 1..=n_max {
        let current = solve_moment(order, &prev, spec, model, contract, grid)?;
        point_values.push(current.interpolate(grid.t0, z0)?);
        grids.push(current.clone());
        prev = current;
    }
    Ok((grids, point_values))
}

/// Thomas algorithm for a tridiagonal system; `lower` and `upper` have
/// length n−1, `diag` and `rhs` length n.
pub fn tridiagonal_solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::Shape("empty system".into()));
    }
    if rhs.len() != n || (n > 1 && (lower.len() != n - 1 || upper.len() != n - 1)) {
        return Err(Error::Shape(format!(
            "band lengths ({}, {}, {}) inconsistent with rhs length {}",
            lower.len(),
            diag.len(),
            upper.len(),
            rhs.len()
        )));
    }
    let mut scratch = vec![0.0; 2 * n];
    let mut out = vec![0.0; n];
    thomas_in_place(lower, diag, upper, rhs, &mut scratch, &mut out)?;
    Ok(out)
}

fn thomas_in_place(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let (c_prime, d_prime) = scratch.split_at_mut(n);
    let mut denom = diag[0];
    if !denom.is_finite() || denom.abs() < 1e-300 {
        return Err(Error::Numerical("zero pivot at row 0".into()));
    }
    if n > 1 {
        c_prime[0] = upper[0] / denom;
    }
    d_prime[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c_prime[i - 1];
        if !denom.is_finite() || denom.abs() < 1e-300 {
            return Err(Error::Numerical(format!("zero pivot at row {i}")));
        }
        if i < n - 1 {
            c_prime[i] = upper[i] / denom;
        }
        d_prime[i] = (rhs[i] - lower[i - 1] * d_prime[i - 1]) / denom;
    }
    out[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d_prime[i] - c_prime[i] * out[i + 1];
    }
    Ok(())
}
