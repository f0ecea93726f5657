use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nwa_cli::commands;
use nwa_cli::RunConfig;
use nwa_core::{DesignKind, JointInclusion, Variant};

#[derive(Parser)]
#[command(name = "nwa", version, about = "Nonresponse weighting adjustment for survey totals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all six simulation scenarios and write the report tables.
    Study(Common),
    /// Run the one scenario selected by `design` and `rho`.
    Scenario(Common),
    /// Fit response models to a `unit,pi,r,x1..,y` CSV and estimate the total.
    Fit(FitArgs),
    /// Print the Newton iterations of one fit as CSV.
    Trace(TraceArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicates per scenario.
    #[arg(long)]
    reps: Option<usize>,
    /// srs or poisson.
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write every replicate record.
    #[arg(long)]
    emit_raw: bool,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k.trim(), v)?;
        }
        let flags: [(&str, Option<String>); 6] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("reps", self.reps.map(|v| v.to_string())),
            ("design", self.design.clone()),
            ("rho", self.rho.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if self.emit_raw {
            cfg.emit_raw = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with columns unit,pi,r,x1[,x2..],y.
    input: PathBuf,
    /// Comma-separated estimators among mle_1, mle_1/pi, cal_U, cal_S.
    #[arg(long, default_value = "mle_1,mle_1/pi,cal_S")]
    variants: String,
    /// Population totals `N,sum x1,..` for cal_U.
    #[arg(long, value_delimiter = ',')]
    pop_totals: Option<Vec<f64>>,
    /// Design of the input sample, for the joint inclusion probabilities.
    #[arg(long, default_value = "poisson")]
    design: String,
    /// Population size; required with `--design srs`.
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "cal_U")]
    variant: String,
    /// Replicate whose sample is fitted.
    #[arg(long, default_value_t = 0)]
    replicate: usize,
}

fn study(args: &Common, all: bool) -> Result<()> {
    let cfg = args.resolve()?;
    let scenarios = if all { commands::study_scenarios(&cfg)? } else { vec![commands::configured_scenario(&cfg)?] };
    eprintln!(
        "running {} scenario(s) x {} replicates (seed {}, config {})",
        scenarios.len(),
        cfg.reps,
        cfg.seed,
        cfg.hash()
    );
    let reports = commands::run_all(&cfg, &scenarios)?;
    for path in commands::write_outputs(&cfg, &reports, &cfg.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let kind: DesignKind = args.design.parse()?;
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let joint = match kind {
        DesignKind::Poisson => JointInclusion::Poisson,
        DesignKind::Srs => {
            let population = args.population_size.context("--design srs needs --population-size")?;
            let rows = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&args.input)?.records().count();
            JointInclusion::Srs { population, sample: rows }
        }
    };
    let input = commands::read_survey_csv(file, joint)?;
    let variants: Vec<Variant> = args.variants.split(',').map(|s| s.parse()).collect::<Result<_, _>>()?;
    let outputs = commands::fit_survey(&input, &variants, args.pop_totals.as_deref(), &Default::default())?;
    for o in &outputs {
        let status = o.fit.as_ref().map(|f| f.status.name()).unwrap_or("-");
        match (&o.estimate, &o.variance) {
            (Some(e), Some(v)) => println!("{:<9} {:>14.6e}  se {:>12.4e}  ({status})", o.variant.name(), e.value, v.total.max(0.0).sqrt()),
            (Some(e), None) => println!("{:<9} {:>14.6e}  ({status})", o.variant.name(), e.value),
            _ => println!("{:<9} {:>14}  ({status})", o.variant.name(), "-"),
        }
    }
    for path in commands::write_fit_outputs(&input, &outputs, &args.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn trace(args: &TraceArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let variant: Variant = args.variant.parse()?;
    let fit = commands::trace_replicate(&cfg, variant, args.replicate)?;
    eprintln!("{}: {} after {} iterations", variant, fit.status.name(), fit.iterations);
    fit.write_trace_csv(io::stdout().lock())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Study(a) => study(a, true),
        Command::Scenario(a) => study(a, false),
        Command::Fit(a) => fit(a),
        Command::Trace(a) => trace(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
