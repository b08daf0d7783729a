use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riesz_lab::commands::{run_diagnose, run_estimate, run_oracle, run_positivity};
use riesz_lab::report::{emit_report, replicates_csv, Report};
use riesz_lab::{scenarios, Format, LabError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "riesz-lab", version, about = "Design-based effect estimation with Riesz representors")]
struct Cli {
    /// Scenario config file (JSON).
    #[arg(long, global = true, conflicts_with = "builtin")]
    config: Option<PathBuf>,
    /// Built-in scenario name; see `--list`.
    #[arg(long, global = true)]
    builtin: Option<String>,
    /// List built-in scenarios and exit.
    #[arg(long)]
    list: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Point estimate from observed data or one sampled assignment.
    Estimate {
        #[arg(long)]
        with_variance: bool,
    },
    /// Monte Carlo replication over seeded assignments.
    Simulate {
        /// Also write per-replicate rows to this CSV file.
        #[arg(long)]
        replicates: Option<PathBuf>,
    },
    /// Positivity and strong positivity per unit.
    Positivity,
    /// Operator norm, neighborhood sizes and rate quantities.
    Diagnose {
        #[arg(long, default_value_t = 4.0)]
        p: f64,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        #[arg(long)]
        nondegeneracy: Option<f64>,
    },
    /// Exact moments by enumerating the design support.
    Oracle {
        #[arg(long)]
        with_variance: bool,
    },
}

fn load(cli: &Cli) -> Result<ScenarioConfig, LabError> {
    let mut cfg = match (&cli.config, &cli.builtin) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => scenarios::builtin(name)
            .ok_or_else(|| LabError::Config(format!("unknown built-in scenario {name:?}")))?,
        (None, None) => return Err(LabError::Config("pass --config <file> or --builtin <name>".into())),
    };
    let o = &cli.overrides;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.reps {
        cfg.reps = r;
    }
    if let Some(a) = o.alpha {
        cfg.alpha = a;
    }
    if let Some(t) = o.tol {
        cfg.tol = t;
    }
    if let Some(f) = o.format {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit<R: Report>(report: &R, cfg: &ScenarioConfig, out: Option<&PathBuf>) -> Result<(), LabError> {
    let text = emit_report(report, cfg.format, out.map(PathBuf::as_path))?;
    if out.is_none() {
        print!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, LabError> {
    if cli.list {
        for name in scenarios::NAMES {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = &cli.command else {
        return Err(LabError::Config("missing subcommand".into()));
    };
    let cfg = load(&cli)?;
    let out = cli.overrides.out.as_ref();
    match command {
        Command::Estimate { with_variance } => emit(&run_estimate(&cfg, *with_variance)?, &cfg, out)?,
        Command::Simulate { replicates } => {
            let (report, outcomes) = riesz_lab::run_scenario(&cfg)?;
            if let Some(path) = replicates {
                std::fs::write(path, replicates_csv(&outcomes)?)?;
            }
            emit(&report, &cfg, out)?;
            if let Some(t) = report.runtime_secs {
                eprintln!("runtime {t:.3} s");
            }
        }
        Command::Positivity => {
            let report = run_positivity(&cfg)?;
            emit(&report, &cfg, out)?;
            if !report.holds {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Diagnose { p, q, nondegeneracy } => emit(&run_diagnose(&cfg, *p, *q, *nondegeneracy)?, &cfg, out)?,
        Command::Oracle { with_variance } => emit(&run_oracle(&cfg, *with_variance)?, &cfg, out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = riesz_lab::threads_from_env() {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let LabError::Positivity { report, .. } = &e {
                for w in &report.witnesses {
                    eprintln!("  null direction {} carries functional value {}", w.index, w.value);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
