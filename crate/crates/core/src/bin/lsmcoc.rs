use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lsmcoc::basis::{bases_for, feasible_strikes};
use lsmcoc::config::{Config, OracleKind};
use lsmcoc::engine::{lsm_backward, select_life_strikes};
use lsmcoc::io::{self, Manifest};
use lsmcoc::models::Model;
use lsmcoc::oracle::{closed_form_estimate, nested_value_t2};
use lsmcoc::{validate, Error, Result};

#[derive(Parser)]
#[command(name = "lsmcoc", version, about = "Cost-of-capital valuation by least squares Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed of the stage being run (training, validation or oracle).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores. Overrides the config file and LSMCOC_THREADS.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    output_dir: Option<PathBuf>,
    /// Histogram bins in the validation report.
    #[arg(long, global = true, value_name = "N")]
    bins: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the regression coefficients for every time step.
    Value,
    /// Score a fitted coefficient table on fresh simulations.
    Validate {
        /// Coefficient file; the manifest is read from the same directory.
        /// Defaults to the output directory.
        #[arg(long, value_name = "PATH")]
        coefficients: Option<PathBuf>,
    },
    /// Reference value by nested simulation (T = 2) or closed form.
    Oracle {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Method {
    Nested,
    ClosedForm,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Mismatch(_) => 2,
        Error::Unsupported(_) => 4,
        Error::Io(_) => 1,
        Error::EmptySample
        | Error::LengthMismatch { .. }
        | Error::RankDeficient { .. }
        | Error::Underdetermined { .. }
        | Error::NonFinite { .. }
        | Error::DivisionGuard(_) => 3,
    }
}

fn load(common: &Common) -> Result<Config> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut config = Config::load(path)?;
    if let Some(threads) = common.threads {
        config.run.threads = threads;
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(bins) = common.bins {
        if bins == 0 {
            return Err(Error::Config("--bins must be positive".into()));
        }
        config.validation.bins = bins;
    }
    Ok(config)
}

fn life_strikes(config: &Config, model: &Model) -> Result<Vec<f64>> {
    let Model::Life(life) = model else {
        return Ok(Vec::new());
    };
    if config.basis.select_strikes {
        return select_life_strikes(life, &config.basis.strikes, config.basis.strike_count, &config.run_config()?);
    }
    let kept = feasible_strikes(life, &config.basis.strikes, config.run.outer);
    if kept.len() < config.basis.strikes.len() {
        log::warn!("dropping strikes that F rarely exceeds; keeping {kept:?}");
    }
    Ok(kept)
}

fn run_value(common: &Common) -> Result<()> {
    let mut config = load(common)?;
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    let model = config.build_model()?;
    let strikes = life_strikes(&config, &model)?;
    let bases = bases_for(&model, &strikes)?;
    let output = lsm_backward(&model, &bases, &config.run_config()?)?;
    let dir = &config.output_dir;
    io::write(dir, io::COEFFICIENTS_FILE, &io::coefficients_csv(&output.table))?;
    io::write(dir, io::MANIFEST_FILE, &Manifest::new(&config, &bases, &strikes, &output.table).to_json())?;
    io::write(dir, io::TIMINGS_FILE, &io::timings_json(&output.timings))?;
    println!("v0 = {}", output.table.v0);
    println!("r0 = {}  e0 = {}", output.table.r0, output.table.e0);
    for timing in &output.timings {
        println!("t = {}: {:.3} s", timing.t, timing.seconds);
    }
    Ok(())
}

fn run_validate(common: &Common, coefficients: Option<&PathBuf>) -> Result<()> {
    let mut config = load(common)?;
    if let Some(seed) = common.seed {
        config.validation.seed = seed;
    }
    let coef_path = coefficients
        .cloned()
        .unwrap_or_else(|| config.output_dir.join(io::COEFFICIENTS_FILE));
    let manifest_path = coef_path
        .parent()
        .map(|p| p.join(io::MANIFEST_FILE))
        .unwrap_or_else(|| PathBuf::from(io::MANIFEST_FILE));
    let read = |p: &PathBuf| {
        std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
    };
    let manifest = Manifest::from_json(&read(&manifest_path)?)?;
    let model = config.build_model()?;
    let bases = bases_for(&model, &manifest.strikes)?;
    if io::basis_hash(&config, &bases) != manifest.basis_hash {
        return Err(Error::Mismatch(format!(
            "{} was produced for a different model or basis",
            coef_path.display()
        )));
    }
    let steps = io::align_steps(io::parse_coefficients(&read(&coef_path)?)?, &bases)?;
    let table = manifest.table(steps)?;
    let report = validate(&model, &bases, &table, &config.coc()?, &config.validation_config())?;
    let dir = &config.output_dir;
    io::write(dir, io::REPORT_FILE, &io::report_csv(&report))?;
    io::write(dir, io::HISTOGRAM_FILE, &io::histograms_csv(&report))?;
    println!("t  nrmse_v    nrmse_r    mean(1-andp)  median_aroc  invalid_aroc");
    for r in &report.per_time {
        println!(
            "{}  {:.3e}  {:.3e}  {:.3e}     {:.4}       {}",
            r.t,
            r.nrmse.v,
            r.nrmse.r,
            1.0 - r.andp_mean,
            r.aroc_median,
            r.aroc_invalid
        );
    }
    Ok(())
}

fn run_oracle(common: &Common, method: Option<Method>) -> Result<()> {
    let mut config = load(common)?;
    if let Some(seed) = common.seed {
        config.oracle.seed = seed;
    }
    let kind = match method {
        Some(Method::Nested) => OracleKind::Nested,
        Some(Method::ClosedForm) => OracleKind::ClosedForm,
        None => config.oracle.method,
    };
    let model = config.build_model()?;
    let coc = config.coc()?;
    let estimate = match kind {
        OracleKind::Nested => nested_value_t2(&model, &config.nested_config(), &coc)?,
        OracleKind::ClosedForm => match &model {
            Model::ArGarch(m) => closed_form_estimate(&m.params, config.oracle.level, config.oracle.sigma, &coc),
            _ => {
                return Err(Error::Unsupported(
                    "closed form exists only for the single AR-GARCH model".into(),
                ))
            }
        },
    };
    io::write(&config.output_dir, io::ORACLE_FILE, &io::oracle_csv(&estimate))?;
    println!("{},{},{}", estimate.value, estimate.standard_error, estimate.method);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Value => run_value(&cli.common),
        Command::Validate { coefficients } => run_validate(&cli.common, coefficients.as_ref()),
        Command::Oracle { method } => run_oracle(&cli.common, *method),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
