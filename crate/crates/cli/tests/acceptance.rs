//! Acceptance suite: one test per engine-level guarantee, each printing a
//! pass line with its runtime (visible under `--nocapture`).
//!
//! Run with: cargo test -p reserve-cli --test acceptance -- --nocapture

use std::time::Instant;

use reserve_core::model::{AgeTerm, BasisSet, ContractSpec, IntensityModel, RandomWalkParams, TimeTerm};
use reserve_core::pde::Grid1D;
use reserve_core::simulate::PvSource;
use reserve_core::{
    build_grid, ks_two_sample, markov_2d, mimic_1d, present_value, sample_present_values,
    simulate_nu_paths, simulate_terminal_states, solve_moments, thinning_events,
    z_marginal_stats, EmpiricalDistribution, Matrix, PortfolioState, SimConfig,
};

/// Banded covariance: `scale` on the diagonal, `0.2·scale` on the first
/// off-diagonal.
fn banded_sigma(dim: usize, scale: f64) -> Matrix {
    let mut s = Matrix::zeros(dim, dim);
    for i in 0..dim {
        s[(i, i)] = scale;
        if i + 1 < dim {
            s[(i, i + 1)] = 0.2 * scale;
            s[(i + 1, i)] = 0.2 * scale;
        }
    }
    s
}

/// Reference synthetic model, linear basis: realistic low-hazard operating
/// point (f(z₀) ≈ 0.1/year) with slow parameter drift.
fn reference_linear() -> IntensityModel {
    IntensityModel::new(
        BasisSet::linear(),
        55.0,
        1.0,
        RandomWalkParams::new(
            vec![-2.0, -0.05, -2.3, 0.01],
            vec![0.01, 0.002, -0.01, 0.003],
            banded_sigma(4, 0.004),
        )
        .unwrap(),
    )
    .unwrap()
}

/// Reference synthetic model, exponential time-term family.
fn reference_exp3() -> IntensityModel {
    IntensityModel::new(
        BasisSet::exp3(),
        55.0,
        1.0,
        RandomWalkParams::new(
            vec![-2.0, -0.05, 0.02, -2.3, 0.01, 0.03],
            vec![0.01, 0.002, 0.0, -0.01, 0.003, 0.001],
            banded_sigma(6, 0.004),
        )
        .unwrap(),
    )
    .unwrap()
}

/// Scalar environment model: single constant loading, so Z_t = ν_t.
fn scalar_model(z0: f64, sigma_sq: f64) -> IntensityModel {
    let basis = BasisSet::new(
        vec![AgeTerm {
            intercept: 1.0,
            slope: 0.0,
        }],
        vec![TimeTerm::Constant],
    )
    .unwrap();
    IntensityModel::new(
        basis,
        40.0,
        1.0,
        RandomWalkParams::new(vec![z0], vec![0.0], Matrix::from_rows(&[vec![sigma_sq]]).unwrap())
            .unwrap(),
    )
    .unwrap()
}

/// z₀ with softplus(z₀) = 0.08, so f(z₀) + r = 0.1 at r = 0.02.
const Z0_FLAT: f64 = -2.4854619918623664;

fn intensity_path(model: &IntensityModel, paths: &reserve_core::PathSet, path: usize) -> Vec<f64> {
    (0..paths.time_grid.len())
        .map(|k| {
            model
                .intensity(paths.time_grid[k], paths.state(path, k))
                .unwrap()
        })
        .collect()
}

fn pass(name: &str, started: Instant, limit_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("[PASS] {name} ({elapsed:.1}s, limit {limit_s}s)");
    assert!(
        elapsed < limit_s,
        "{name}: runtime {elapsed:.1}s exceeded {limit_s}s"
    );
}

#[test]
fn criterion_01_closed_form_annuity() {
    let started = Instant::now();
    let closed_form = (1.0 - (-1.0f64).exp()) / 0.1;
    let contract = ContractSpec::unit(10.0, 0.02);

    // PDE on the exactly-flat hazard: f(z₀) + r = 0.1 with a frozen
    // environment.
    let frozen = scalar_model(Z0_FLAT, 0.0);
    let spec = mimic_1d(&frozen);
    let grid = build_grid(&spec, &frozen, &contract, 6.0, 0.005, 0.005).unwrap();
    let (_, points) = solve_moments(1, &spec, &frozen, &contract, &grid).unwrap();
    let rel = (points[0] - closed_form).abs() / closed_form;
    assert!(
        rel <= 2e-3,
        "PDE v1 = {} vs closed form {closed_form} (rel {rel})",
        points[0]
    );

    // Monte Carlo with a faint environment noise so the 99% confidence
    // interval has width; the noise-induced mean shift is second order and
    // far below the interval half-width.
    let noisy = scalar_model(Z0_FLAT, 4e-6);
    let cfg = SimConfig::new(10_000, 0.01, 100).unwrap();
    let dist = sample_present_values(PvSource::Model(&noisy), &contract, &cfg).unwrap();
    let (mean, lo, hi) = dist.moment_ci(1, 0.99).unwrap();
    assert!(
        lo <= closed_form && closed_form <= hi,
        "closed form {closed_form} outside MC 99% CI ({lo}, {hi}), mean {mean}"
    );
    assert!((mean - closed_form).abs() / closed_form <= 2e-3);

    pass("criterion 1: closed-form annuity (PDE 2e-3, MC 99% CI)", started, 5.0);
}

#[test]
fn criterion_02_deterministic_moment_powers() {
    let started = Instant::now();
    let contract = ContractSpec::unit(10.0, 0.02);
    // Σ = 0 with nonzero drift, both basis families.
    let models = vec![
        IntensityModel::new(
            BasisSet::linear(),
            55.0,
            1.0,
            RandomWalkParams::new(
                vec![-2.0, -0.05, -2.3, 0.01],
                vec![0.01, 0.002, -0.01, 0.003],
                Matrix::zeros(4, 4),
            )
            .unwrap(),
        )
        .unwrap(),
        IntensityModel::new(
            BasisSet::exp3(),
            55.0,
            1.0,
            RandomWalkParams::new(
                vec![-2.0, -0.05, 0.02, -2.3, 0.01, 0.03],
                vec![0.01, 0.002, 0.0, -0.01, 0.003, 0.001],
                Matrix::zeros(6, 6),
            )
            .unwrap(),
        )
        .unwrap(),
    ];
    for model in &models {
        let spec = mimic_1d(model);
        let grid = build_grid(&spec, model, &contract, 6.0, 0.005, 0.005).unwrap();
        let (_, points) = solve_moments(3, &spec, model, &contract, &grid).unwrap();
        for n in 2..=3usize {
            let power = points[0].powi(n as i32);
            let rel = (points[n - 1] - power).abs() / power;
            assert!(
                rel <= 1e-2,
                "v{n} = {} vs v1^{n} = {power} (rel {rel})",
                points[n - 1]
            );
        }
    }
    pass(
        "criterion 2: deterministic-environment moments are powers of v1",
        started,
        5.0,
    );
}

#[test]
fn criterion_03_survival_identity_under_thinning() {
    let started = Instant::now();
    let model = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);
    let n_policies = 100_000;
    let n_paths = 20;
    let cfg = SimConfig::new(n_paths, 0.01, 300).unwrap();
    let paths = simulate_nu_paths(&model, &cfg, contract.horizon).unwrap();

    let mut cells = 0usize;
    let mut violations = 0usize;
    for p in 0..n_paths {
        let q = intensity_path(&model, &paths, p);
        let events = thinning_events(&q, &paths.time_grid, n_policies, 400 + p as u64);
        // Survivor count per node from the termination-step histogram.
        let n_steps = paths.time_grid.len() - 1;
        let mut died_at = vec![0usize; n_steps];
        let mut survivors_to_end = 0usize;
        for e in &events {
            match e {
                Some(k) => died_at[*k] += 1,
                None => survivors_to_end += 1,
            }
        }
        // Alive at node j ⇔ termination step ≥ j.
        let mut alive = n_policies;
        let mut cum_q = 0.0;
        for j in 0..=n_steps {
            if j > 0 {
                let dt_j = paths.time_grid[j] - paths.time_grid[j - 1];
                cum_q += 0.5 * (q[j - 1] + q[j]) * dt_j;
                alive -= died_at[j - 1];
            }
            let frac = alive as f64 / n_policies as f64;
            let survival = (-cum_q).exp();
            let band = 4.0 * (survival * (1.0 - survival) / n_policies as f64).sqrt();
            cells += 1;
            if (frac - survival).abs() > band {
                violations += 1;
            }
        }
        let _ = survivors_to_end;
    }
    let ok_fraction = 1.0 - violations as f64 / cells as f64;
    assert!(
        ok_fraction >= 0.99,
        "only {ok_fraction:.4} of (path, time) cells within 4 binomial SEs"
    );
    pass(
        "criterion 3: thinned survivor fractions match exp(-\u{222b}q) in \u{2265}99% of cells",
        started,
        60.0,
    );
}

#[test]
fn criterion_04_lln_gap_rate() {
    let started = Instant::now();
    let model = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);
    let n_paths = 50;
    let cfg = SimConfig::new(n_paths, 0.02, 500).unwrap();
    let paths = simulate_nu_paths(&model, &cfg, contract.horizon).unwrap();
    let sizes = [100usize, 1_000, 10_000];
    let mut mean_gap = [0.0f64; 3];
    for p in 0..n_paths {
        let q = intensity_path(&model, &paths, p);
        let v = present_value(&q, &contract, &paths.time_grid).unwrap();
        for (slot, &n) in sizes.iter().enumerate() {
            let portfolio = PortfolioState::all_active(n);
            let seed = 600 + (p * sizes.len() + slot) as u64;
            let total = reserve_core::aggregate_pv(&portfolio, &q, &contract, &paths.time_grid, seed)
                .unwrap();
            mean_gap[slot] += (total / n as f64 - v).abs() / n_paths as f64;
        }
    }
    for w in mean_gap.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (2.0..=5.0).contains(&ratio),
            "per-decade gap ratio {ratio} outside [2, 5]; gaps {mean_gap:?}"
        );
    }
    pass(
        "criterion 4: |L/n - V| shrinks by 2-5x per decade of portfolio size",
        started,
        120.0,
    );
}

#[test]
fn criterion_05_markov_2d_exactness() {
    let started = Instant::now();
    let model = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);

    // Path-wise: the present value from the full 4-D ν path equals the one
    // from the exact 2-D functionals of the same path.
    let cfg = SimConfig::new(200, 0.01, 310).unwrap();
    let paths = simulate_nu_paths(&model, &cfg, contract.horizon).unwrap();
    let a_table: Vec<Vec<f64>> = paths
        .time_grid
        .iter()
        .map(|&s| model.loading_vector(s))
        .collect();
    for p in 0..cfg.n_paths {
        let q_model = intensity_path(&model, &paths, p);
        let q_functional: Vec<f64> = (0..paths.time_grid.len())
            .map(|k| {
                let z1: f64 = a_table[k]
                    .iter()
                    .zip(paths.state(p, k))
                    .map(|(a, nu)| a * nu)
                    .sum();
                model.env_intensity(z1)
            })
            .collect();
        let v_model = present_value(&q_model, &contract, &paths.time_grid).unwrap();
        let v_functional = present_value(&q_functional, &contract, &paths.time_grid).unwrap();
        assert!(
            (v_model - v_functional).abs() <= 1e-10,
            "path {p}: {v_model} vs {v_functional}"
        );
    }

    // Distribution-wise: independently driven 2-D Euler samples are
    // indistinguishable from the full model at the 1% KS level in at least
    // 95% of seeded repetitions.
    let spec2 = markov_2d(&model).unwrap();
    let reps = 40;
    let mut accepted = 0;
    for rep in 0..reps {
        let cfg_full = SimConfig::new(10_000, 0.01, 1_000 + 2 * rep as u64).unwrap();
        let cfg_2d = SimConfig::new(10_000, 0.01, 1_001 + 2 * rep as u64).unwrap();
        let full = sample_present_values(PvSource::Model(&model), &contract, &cfg_full).unwrap();
        let two_d = sample_present_values(PvSource::Spec(&spec2), &contract, &cfg_2d).unwrap();
        let (_, p_value) = ks_two_sample(&full, &two_d);
        if p_value >= 0.01 {
            accepted += 1;
        }
    }
    let fraction = accepted as f64 / reps as f64;
    assert!(
        fraction >= 0.95,
        "KS test rejected too often: accepted fraction {fraction}"
    );
    pass(
        "criterion 5: exact 2-D representation (path-wise 1e-10; KS accepts in \u{2265}95% of reps)",
        started,
        120.0,
    );
}

#[test]
fn criterion_06_mimicked_marginals() {
    let started = Instant::now();
    let contract = ContractSpec::unit(10.0, 0.02);
    for (label, model) in [("linear", reference_linear()), ("exp3", reference_exp3())] {
        let spec = mimic_1d(&model);
        let n = 100_000usize;
        let cfg = SimConfig::new(n, 0.01, 620).unwrap();
        let terminals = simulate_terminal_states(&spec, &cfg, contract.horizon).unwrap();
        let nf = n as f64;
        let mean: f64 = terminals.iter().sum::<f64>() / nf;
        let var: f64 =
            terminals.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (nf - 1.0);
        let (mean_exact, var_exact) = z_marginal_stats(&model, contract.horizon);
        let se_mean = (var_exact / nf).sqrt();
        let se_var = var_exact * (2.0 / nf).sqrt();
        assert!(
            (mean - mean_exact).abs() <= 4.0 * se_mean,
            "{label}: mean {mean} vs {mean_exact} (band {})",
            4.0 * se_mean
        );
        assert!(
            (var - var_exact).abs() <= 4.0 * se_var,
            "{label}: var {var} vs {var_exact} (band {})",
            4.0 * se_var
        );
    }
    pass(
        "criterion 6: mimicked terminal mean/variance within 4 SE for both bases",
        started,
        60.0,
    );
}

#[test]
fn criterion_07_pde_inside_mc_confidence_intervals() {
    let started = Instant::now();
    let model = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);
    let spec = mimic_1d(&model);
    let grid = build_grid(&spec, &model, &contract, 6.0, 0.005, 0.005).unwrap();
    let (_, points) = solve_moments(3, &spec, &model, &contract, &grid).unwrap();

    let cfg = SimConfig::new(100_000, 0.01, 700).unwrap();
    let dist = sample_present_values(PvSource::Spec(&spec), &contract, &cfg).unwrap();
    for n in 1..=3u32 {
        let (mean, lo, hi) = dist.moment_ci(n, 0.99).unwrap();
        let v = points[(n - 1) as usize];
        assert!(
            lo <= v && v <= hi,
            "v{n} = {v} outside MC 99% CI ({lo}, {hi}), MC mean {mean}"
        );
    }
    pass(
        "criterion 7: PDE v1..v3 inside 99% MC confidence intervals",
        started,
        300.0,
    );
}

#[test]
fn criterion_08_first_order_grid_convergence() {
    let started = Instant::now();
    let model = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);
    let spec = mimic_1d(&model);
    let coarse = build_grid(&spec, &model, &contract, 6.0, 0.1, 0.1).unwrap();
    let mut values = Vec::new();
    for &delta in &[0.1, 0.05, 0.025] {
        let grid =
            Grid1D::new(coarse.z_min, coarse.z_max, delta, 0.0, contract.horizon, delta).unwrap();
        let (_, points) = solve_moments(3, &spec, &model, &contract, &grid).unwrap();
        values.push(points);
    }
    for n in 0..3 {
        let (coarse_v, mid_v, fine_v) = (values[0][n], values[1][n], values[2][n]);
        let ratio = (coarse_v - mid_v) / (mid_v - fine_v);
        assert!(
            (1.5..=3.0).contains(&ratio),
            "moment {}: Richardson ratio {ratio} from ({coarse_v}, {mid_v}, {fine_v})",
            n + 1
        );
        let monotone = (coarse_v < mid_v && mid_v < fine_v) || (coarse_v > mid_v && mid_v > fine_v);
        assert!(
            monotone,
            "moment {}: values not monotone under refinement",
            n + 1
        );
    }
    pass(
        "criterion 8: Richardson ratios in [1.5, 3.0] with monotone refinement",
        started,
        120.0,
    );
}

#[test]
fn criterion_09_exact_identities() {
    let started = Instant::now();

    // Probability/intensity consistency on 1000 random inputs.
    let model = IntensityModel::new(
        BasisSet::exp3(),
        50.0,
        0.8,
        RandomWalkParams::deterministic(vec![0.0; 6]),
    )
    .unwrap();
    let mut rng = reserve_core::rng::PathRng::new(900, 0);
    for _ in 0..1000 {
        let t = 10.0 * rng.next_uniform();
        let nu: Vec<f64> = (0..6).map(|_| 4.0 * (rng.next_uniform() - 0.5)).collect();
        let q = model.intensity(t, &nu).unwrap();
        let p = model.termination_probability(t, &nu).unwrap();
        assert!(
            (1.0 - (-q * 0.8).exp() - p).abs() <= 1e-12,
            "consistency identity violated at t={t}"
        );
    }

    // Positive homogeneity of the empirical quantile, exact in floating
    // point.
    let reference = reference_linear();
    let contract = ContractSpec::unit(10.0, 0.02);
    let cfg = SimConfig::new(1_000, 0.05, 910).unwrap();
    let dist = sample_present_values(PvSource::Model(&reference), &contract, &cfg).unwrap();
    for c in [0.5f64, 3.0, 17.25] {
        let scaled =
            EmpiricalDistribution::from_sample(dist.sample().iter().map(|v| c * v).collect())
                .unwrap();
        for p in [0.01, 0.25, 0.5, 0.9, 0.995, 1.0] {
            assert_eq!(
                scaled.quantile(p).unwrap(),
                c * dist.quantile(p).unwrap(),
                "homogeneity broke at c={c}, p={p}"
            );
        }
    }

    // Moment inequalities on both solver outputs.
    let spec = mimic_1d(&reference);
    let grid = build_grid(&spec, &reference, &contract, 6.0, 0.02, 0.02).unwrap();
    let (_, pde_points) = solve_moments(3, &spec, &reference, &contract, &grid).unwrap();
    let mc_cfg = SimConfig::new(20_000, 0.02, 920).unwrap();
    let mc = sample_present_values(PvSource::Model(&reference), &contract, &mc_cfg).unwrap();
    let mc_moments: Vec<f64> = (1..=3)
        .map(|k| {
            mc.sample().iter().map(|v| v.powi(k)).sum::<f64>() / mc.n() as f64
        })
        .collect();
    for (label, m) in [("pde", &pde_points), ("mc", &mc_moments)] {
        assert!(
            m[1] >= m[0] * m[0],
            "{label}: v2 = {} < v1^2 = {}",
            m[1],
            m[0] * m[0]
        );
        assert!(
            m[1] * m[1] <= m[0] * m[2],
            "{label}: v2^2 = {} > v1*v3 = {}",
            m[1] * m[1],
            m[0] * m[2]
        );
    }
    pass(
        "criterion 9: consistency identity 1e-12, exact quantile homogeneity, moment inequalities",
        started,
        5.0,
    );
}

#[test]
fn criterion_10_cli_determinism() {
    let started = Instant::now();
    let binary = env!("CARGO_BIN_EXE_reserve");
    let base = std::env::temp_dir().join(format!("reserve_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();

    let config_path = base.join("config.txt");
    std::fs::write(
        &config_path,
        "\
[model]
basis = linear
x = 55
delta_d = 1.0
nu0 = [-2.0, -0.05, -2.3, 0.01]
mu = [0.01, 0.002, -0.01, 0.003]
sigma = [[0.004, 0.0008, 0, 0], [0.0008, 0.004, 0.0008, 0], [0, 0.0008, 0.004, 0.0008], [0, 0, 0.0008, 0.004]]

[contract]
T = 10
r = 0.02

[mc]
paths = 2000
dt = 0.05
seed = 42

[pde]
dz = 0.1
dt = 0.1
moments = 3

[portfolio]
active = 500
quantiles = [0.5, 0.95, 0.995]
",
    )
    .unwrap();
    let series_path = base.join("series.csv");
    std::fs::write(
        &series_path,
        "year,nu_1_1,nu_1_2,nu_2_1,nu_2_2\n\
         2000,-2.00,-0.05,-2.30,0.01\n\
         2001,-1.98,-0.06,-2.31,0.02\n\
         2002,-1.99,-0.04,-2.29,0.01\n\
         2003,-1.97,-0.05,-2.33,0.03\n\
         2004,-1.96,-0.03,-2.30,0.02\n",
    )
    .unwrap();

    let run = |command: &str, out: &std::path::Path, threads: &str| {
        let mut cmd = std::process::Command::new(binary);
        if command == "fit" {
            cmd.arg("fit").arg(&series_path);
        } else {
            cmd.arg(command).arg("--config").arg(&config_path);
        }
        let status = cmd
            .arg("--out")
            .arg(out)
            .env("RAYON_NUM_THREADS", threads)
            .status()
            .expect("spawn reserve binary");
        assert!(status.success(), "{command} failed");
    };

    let expected_files: &[(&str, &[&str])] = &[
        ("fit", &["fit.json"]),
        ("simulate", &["moments.csv", "dist_full.csv"]),
        (
            "solve",
            &[
                "moments.csv",
                "moment_grid_1.csv",
                "moment_grid_2.csv",
                "moment_grid_3.csv",
            ],
        ),
        (
            "compare",
            &[
                "mc_moments.csv",
                "pde_moments.csv",
                "ks.csv",
                "dist_full.csv",
                "dist_markov2d.csv",
                "dist_mimicked1d.csv",
            ],
        ),
        ("portfolio", &["portfolio.csv"]),
    ];

    for (command, files) in expected_files {
        let out_a = base.join(format!("{command}_a"));
        let out_b = base.join(format!("{command}_b"));
        run(command, &out_a, "1");
        run(command, &out_b, "4");
        for file in *files {
            let a = std::fs::read(out_a.join(file))
                .unwrap_or_else(|e| panic!("{command}: missing {file}: {e}"));
            let b = std::fs::read(out_b.join(file)).unwrap();
            assert_eq!(
                a, b,
                "{command}: {file} differs between runs with different thread counts"
            );
        }
    }
    std::fs::remove_dir_all(&base).ok();
    pass(
        "criterion 10: CLI reports byte-identical across reruns and thread counts",
        started,
        60.0,
    );
}
