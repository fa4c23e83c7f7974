//! Command implementations: fit, simulate, solve, compare, portfolio.
//!
//! Every report file goes through the sig6 formatter, so a rerun with the
//! same config and seed produces byte-identical output regardless of the
//! degree of parallelism.

use std::path::{Path, PathBuf};

use reserve_core::pde::Grid1D;
use reserve_core::simulate::PvSource;
use reserve_core::{
    build_grid, cholesky_psd, estimate_random_walk, markov_2d, mimic_1d, portfolio_quantile,
    portfolio_reserve, sample_present_values, solve_moments, EmpiricalDistribution,
};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{json_matrix, json_vec, sig6, write_file};

/// Classified command failure; chooses the process exit status.
#[derive(Debug)]
pub enum CommandError {
    /// Bad input: config, schema, preconditions. Exit status 2.
    Validation(String),
    /// Numerical breakdown inside the engine. Exit status 3.
    Numerical(String),
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Validation(m) => write!(f, "{m}"),
            CommandError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Validation(e.0)
    }
}

impl From<reserve_core::Error> for CommandError {
    fn from(e: reserve_core::Error) -> Self {
        match e {
            reserve_core::Error::Numerical(m) => CommandError::Numerical(m),
            other => CommandError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Validation(format!("i/o error: {e}"))
    }
}

type CmdResult = Result<(), CommandError>;

/// Estimate random-walk drift and covariance from a parameter time series
/// and write `fit.json`.
pub fn run_fit(series_path: &Path, out_dir: &Path) -> CmdResult {
    let text = std::fs::read_to_string(series_path).map_err(|e| {
        CommandError::Validation(format!("cannot read {}: {e}", series_path.display()))
    })?;
    let series = parse_series_csv(&text)?;
    let (mu, sigma) = estimate_random_walk(&series)?;
    let chol = cholesky_psd(&sigma)?;
    let dim = mu.len();

    let json = format!(
        "{{\n  \"dim\": {dim},\n  \"years\": {},\n  \"mu\": {},\n  \"sigma\": {},\n  \"chol\": {}\n}}\n",
        series.len(),
        json_vec(&mu),
        json_matrix(&sigma.to_rows()),
        json_matrix(&chol.to_rows()),
    );
    write_file(&out_dir.join("fit.json"), &json)?;
    println!(
        "fitted {} yearly observations, parameter dimension {dim}",
        series.len()
    );
    Ok(())
}

/// Parse the parameter time-series CSV: header `year,nu_1_1,...,nu_n_m`,
/// one row per calendar year at unit spacing.
fn parse_series_csv(text: &str) -> Result<Vec<Vec<f64>>, CommandError> {
    let bad = |msg: String| CommandError::Validation(msg);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad("series CSV is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if columns.is_empty() || columns[0] != "year" {
        return Err(bad("series CSV: first header column must be 'year'".into()));
    }
    let mut max_i = 0usize;
    let mut max_j = 0usize;
    let mut pairs = Vec::new();
    for (pos, name) in columns[1..].iter().enumerate() {
        let rest = name.strip_prefix("nu_").ok_or_else(|| {
            bad(format!(
                "series CSV: column {} is '{name}', expected nu_<i>_<j>",
                pos + 2
            ))
        })?;
        let (i_str, j_str) = rest.split_once('_').ok_or_else(|| {
            bad(format!(
                "series CSV: column {} is '{name}', expected nu_<i>_<j>",
                pos + 2
            ))
        })?;
        let i: usize = i_str
            .parse()
            .map_err(|_| bad(format!("series CSV: column '{name}': bad index")))?;
        let j: usize = j_str
            .parse()
            .map_err(|_| bad(format!("series CSV: column '{name}': bad index")))?;
        max_i = max_i.max(i);
        max_j = max_j.max(j);
        pairs.push((i, j));
    }
    let expected = max_i * max_j;
    if pairs.len() != expected {
        return Err(bad(format!(
            "series CSV: header has {} parameter columns, expected n·m = {expected} (n = {max_i}, m = {max_j})",
            pairs.len()
        )));
    }
    // Row-major ordering (1,1), (1,2), ..., (n,m).
    let mut expected_pairs = Vec::with_capacity(expected);
    for i in 1..=max_i {
        for j in 1..=max_j {
            expected_pairs.push((i, j));
        }
    }
    if pairs != expected_pairs {
        return Err(bad(
            "series CSV: parameter columns must appear in row-major order nu_1_1, nu_1_2, ..."
                .into(),
        ));
    }

    let mut series = Vec::new();
    let mut prev_year: Option<f64> = None;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != pairs.len() + 1 {
            return Err(bad(format!(
                "series CSV row {}: has {} fields, expected {}",
                lineno + 1,
                fields.len(),
                pairs.len() + 1
            )));
        }
        let year: f64 = fields[0].parse().map_err(|_| {
            bad(format!("series CSV row {}: bad year '{}'", lineno + 1, fields[0]))
        })?;
        if let Some(prev) = prev_year {
            if (year - prev - 1.0).abs() > 1e-9 {
                return Err(bad(format!(
                    "series CSV row {}: years must ascend at unit spacing ({prev} then {year})",
                    lineno + 1
                )));
            }
        }
        prev_year = Some(year);
        let values: Result<Vec<f64>, CommandError> = fields[1..]
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>().map_err(|_| {
                    bad(format!(
                        "series CSV row {}, column {}: bad number '{f}'",
                        lineno + 1,
                        col + 2
                    ))
                })
            })
            .collect();
        series.push(values?);
    }
    Ok(series)
}

fn moment_count(cfg: &ExperimentConfig) -> u32 {
    cfg.pde.as_ref().map(|p| p.moments).unwrap_or(3)
}

/// Monte Carlo moments of V under the full parameter random walk.
pub fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> CmdResult {
    let model = cfg.require_model()?;
    let contract = cfg.require_contract()?;
    let mc = cfg.require_mc()?;
    let n_moments = moment_count(cfg);

    let dist = sample_present_values(PvSource::Model(model), contract, mc)?;
    let mut moments = String::from("n,method,value,ci_low,ci_high\n");
    for n in 1..=n_moments {
        let (est, lo, hi) = dist.moment_ci(n, 0.99)?;
        moments.push_str(&format!(
            "{n},mc,{},{},{}\n",
            sig6(est),
            sig6(lo),
            sig6(hi)
        ));
    }
    write_file(&out_dir.join("moments.csv"), &moments)?;
    write_file(&out_dir.join("dist_full.csv"), &dist_csv(&dist))?;
    println!(
        "simulated {} paths; wrote moments.csv and dist_full.csv",
        mc.n_paths
    );
    Ok(())
}

/// PDE moments of the mimicked one-dimensional representation.
pub fn run_solve(cfg: &ExperimentConfig, out_dir: &Path) -> CmdResult {
    let model = cfg.require_model()?;
    let contract = cfg.require_contract()?;
    let pde = cfg.require_pde()?;

    let spec = mimic_1d(model);
    let grid = build_grid(&spec, model, contract, pde.k_sigma, pde.dz, pde.dt)?;
    let (grids, points) = solve_moments(pde.moments, &spec, model, contract, &grid)?;
    warn_peclet(&grids);

    let mut moments = String::from("n,method,value,ci_low,ci_high\n");
    for (n, v) in points.iter().enumerate() {
        moments.push_str(&format!("{},pde,{},,\n", n + 1, sig6(*v)));
    }
    write_file(&out_dir.join("moments.csv"), &moments)?;

    for g in &grids {
        let mut dump = String::from("t,z,v\n");
        for level in 0..g.grid.n_t() {
            let t = g.grid.t_node(level);
            for i in 0..g.grid.n_z() {
                dump.push_str(&format!(
                    "{},{},{}\n",
                    sig6(t),
                    sig6(g.grid.z_node(i)),
                    sig6(g.value(level, i))
                ));
            }
        }
        write_file(&out_dir.join(format!("moment_grid_{}.csv", g.order)), &dump)?;
    }
    println!(
        "solved {} moment equations on a {}x{} grid; wrote moments.csv",
        pde.moments,
        grid.n_t(),
        grid.n_z()
    );
    Ok(())
}

fn warn_peclet(grids: &[reserve_core::MomentGrid]) {
    let worst = grids
        .iter()
        .map(|g| g.max_cell_peclet)
        .fold(0.0f64, f64::max);
    if worst > 2.0 {
        eprintln!(
            "advisory: cell Peclet number reached {}; central drift differencing may oscillate",
            sig6(worst.min(f64::MAX))
        );
    }
}

struct Representation {
    name: &'static str,
    dist: EmpiricalDistribution,
}

/// Side-by-side study: Monte Carlo of every available Markov
/// representation, KS tests between the samples, moment tables from both
/// methods, and CDF dumps for plotting.
pub fn run_compare(cfg: &ExperimentConfig, out_dir: &Path) -> CmdResult {
    let model = cfg.require_model()?;
    let contract = cfg.require_contract()?;
    let mc = cfg.require_mc()?;
    let pde = cfg.require_pde()?;
    let n_moments = pde.moments;

    // Independently seeded sample per representation.
    let mut reps: Vec<Representation> = Vec::new();
    let sub_seed = |k: u64| {
        let mut c = *mc;
        c.seed = mc.seed.wrapping_add(k);
        c
    };
    reps.push(Representation {
        name: "full",
        dist: sample_present_values(PvSource::Model(model), contract, &sub_seed(0))?,
    });
    if model.basis.is_markov_2d_compatible() {
        let spec2 = markov_2d(model)?;
        reps.push(Representation {
            name: "markov2d",
            dist: sample_present_values(PvSource::Spec(&spec2), contract, &sub_seed(1))?,
        });
    }
    let spec1 = mimic_1d(model);
    reps.push(Representation {
        name: "mimicked1d",
        dist: sample_present_values(PvSource::Spec(&spec1), contract, &sub_seed(2))?,
    });

    let mut mc_table = String::from("rep,n,mean,ci_low,ci_high\n");
    for rep in &reps {
        for n in 1..=n_moments {
            let (est, lo, hi) = rep.dist.moment_ci(n, 0.99)?;
            mc_table.push_str(&format!(
                "{},{n},{},{},{}\n",
                rep.name,
                sig6(est),
                sig6(lo),
                sig6(hi)
            ));
        }
    }
    write_file(&out_dir.join("mc_moments.csv"), &mc_table)?;

    let mut ks_table = String::from("pair,d,p_value\n");
    for a in 0..reps.len() {
        for b in (a + 1)..reps.len() {
            let (d, p) = reserve_core::ks_two_sample(&reps[a].dist, &reps[b].dist);
            ks_table.push_str(&format!(
                "{}_vs_{},{},{}\n",
                reps[a].name,
                reps[b].name,
                sig6(d),
                sig6(p)
            ));
        }
    }
    write_file(&out_dir.join("ks.csv"), &ks_table)?;

    for rep in &reps {
        write_file(
            &out_dir.join(format!("dist_{}.csv", rep.name)),
            &dist_csv(&rep.dist),
        )?;
    }

    // PDE refinement table on a common spatial domain (the coarse lattice
    // is a sublattice of the halved ones).
    let coarse = build_grid(&spec1, model, contract, pde.k_sigma, pde.dz, pde.dz)?;
    let mut pde_table = String::from("delta");
    for n in 1..=n_moments {
        pde_table.push_str(&format!(",v{n}"));
    }
    pde_table.push('\n');
    for level in 0..3u32 {
        let delta = pde.dz / f64::powi(2.0, level as i32);
        let grid = Grid1D::new(coarse.z_min, coarse.z_max, delta, 0.0, contract.horizon, delta)?;
        let (grids, points) = solve_moments(n_moments, &spec1, model, contract, &grid)?;
        warn_peclet(&grids);
        pde_table.push_str(&sig6(delta));
        for v in &points {
            pde_table.push_str(&format!(",{}", sig6(*v)));
        }
        pde_table.push('\n');
    }
    write_file(&out_dir.join("pde_moments.csv"), &pde_table)?;

    println!(
        "compared {} representations with {} paths each; wrote mc_moments.csv, pde_moments.csv, ks.csv and {} CDF dumps",
        reps.len(),
        mc.n_paths,
        reps.len()
    );
    Ok(())
}

/// Portfolio reserve and approximate quantiles via the conditional LLN.
pub fn run_portfolio(cfg: &ExperimentConfig, out_dir: &Path) -> CmdResult {
    let model = cfg.require_model()?;
    let contract = cfg.require_contract()?;
    let mc = cfg.require_mc()?;
    let portfolio = cfg.require_portfolio()?;

    let dist = sample_present_values(PvSource::Model(model), contract, mc)?;
    let mut table = String::from("metric,value\n");
    table.push_str(&format!("active,{}\n", portfolio.active));
    table.push_str(&format!(
        "reserve,{}\n",
        sig6(portfolio_reserve(portfolio.active, dist.mean()))
    ));
    for &p in &portfolio.quantiles {
        table.push_str(&format!(
            "quantile_{},{}\n",
            sig6(p),
            sig6(portfolio_quantile(portfolio.active, &dist, p)?)
        ));
    }
    write_file(&out_dir.join("portfolio.csv"), &table)?;
    println!(
        "portfolio of {} active policies; wrote portfolio.csv",
        portfolio.active
    );
    Ok(())
}

fn dist_csv(dist: &EmpiricalDistribution) -> String {
    let n = dist.n() as f64;
    let mut out = String::from("value,cdf\n");
    for (i, v) in dist.sample().iter().enumerate() {
        out.push_str(&format!("{},{}\n", sig6(*v), sig6((i + 1) as f64 / n)));
    }
    out
}

/// Shared CLI surface: resolved output directory.
pub fn resolve_out_dir(cfg: Option<&ExperimentConfig>, flag: Option<&str>) -> PathBuf {
    if let Some(dir) = flag {
        return PathBuf::from(dir);
    }
    if let Some(dir) = cfg.and_then(|c| c.out_dir.as_deref()) {
        return PathBuf::from(dir);
    }
    PathBuf::from(".")
}

/// Apply a seed override to a parsed config.
pub fn override_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let (Some(seed), Some(mc)) = (seed, cfg.mc.as_mut()) {
        mc.seed = seed;
    }
}
