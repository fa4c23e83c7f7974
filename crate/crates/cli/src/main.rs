//! Command-line front end for the disability-annuity reserving engine.
//!
//! Exit status: 0 on success, 2 on validation or input-schema errors, 3 on
//! numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use commands::CommandError;
use config::ExperimentConfig;

const USAGE: &str = "\
usage: reserve <command> [options]

commands:
  fit <series.csv>      estimate drift/covariance from a parameter time series
  simulate              Monte Carlo moments of the present value (full model)
  solve                 PDE moments of the mimicked 1-D representation
  compare               MC + PDE + KS comparison of all representations
  portfolio             portfolio reserve and approximate quantiles

options:
  --config <path>       experiment configuration file
  --seed <u64>          override the Monte Carlo seed from the config
  --out <dir>           output directory (default: [io] out_dir, else '.')
";

struct Args {
    command: String,
    positional: Vec<String>,
    config: Option<String>,
    seed: Option<u64>,
    out: Option<String>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut it = argv.iter();
    let command = it.next().ok_or("missing command")?.clone();
    let mut args = Args {
        command,
        positional: Vec::new(),
        config: None,
        seed: None,
        out: None,
    };
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                args.config = Some(it.next().ok_or("--config needs a path")?.clone());
            }
            "--seed" => {
                let raw = it.next().ok_or("--seed needs a value")?;
                args.seed = Some(
                    raw.parse::<u64>()
                        .map_err(|_| format!("--seed: '{raw}' is not a 64-bit unsigned integer"))?,
                );
            }
            "--out" => {
                args.out = Some(it.next().ok_or("--out needs a directory")?.clone());
            }
            flag if flag.starts_with("--") => return Err(format!("unknown flag {flag}")),
            positional => args.positional.push(positional.to_string()),
        }
    }
    Ok(args)
}

fn run(args: &Args) -> Result<(), CommandError> {
    let load_config = || -> Result<ExperimentConfig, CommandError> {
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| CommandError::Validation("missing --config <path>".into()))?;
        let mut cfg = ExperimentConfig::load(&PathBuf::from(path))?;
        commands::override_seed(&mut cfg, args.seed);
        Ok(cfg)
    };

    match args.command.as_str() {
        "fit" => {
            let series = args.positional.first().ok_or_else(|| {
                CommandError::Validation("fit needs a series CSV path".into())
            })?;
            let out = commands::resolve_out_dir(None, args.out.as_deref());
            commands::run_fit(&PathBuf::from(series), &out)
        }
        "simulate" => {
            let cfg = load_config()?;
            let out = commands::resolve_out_dir(Some(&cfg), args.out.as_deref());
            commands::run_simulate(&cfg, &out)
        }
        "solve" => {
            let cfg = load_config()?;
            let out = commands::resolve_out_dir(Some(&cfg), args.out.as_deref());
            commands::run_solve(&cfg, &out)
        }
        "compare" => {
            let cfg = load_config()?;
            let out = commands::resolve_out_dir(Some(&cfg), args.out.as_deref());
            commands::run_compare(&cfg, &out)
        }
        "portfolio" => {
            let cfg = load_config()?;
            let out = commands::resolve_out_dir(Some(&cfg), args.out.as_deref());
            commands::run_portfolio(&cfg, &out)
        }
        other => Err(CommandError::Validation(format!(
            "unknown command '{other}'\n\n{USAGE}"
        ))),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() {
        eprint!("{USAGE}");
        return ExitCode::from(2);
    }
    let args = match parse_args(&argv) {
        Ok(args) => args,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CommandError::Validation(_) => ExitCode::from(2),
                CommandError::Numerical(_) => ExitCode::from(3),
            }
        }
    }
}
