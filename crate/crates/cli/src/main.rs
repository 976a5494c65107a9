//! `deltashell` command-line front end.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::RunConfig;
use output::{Format, Provenance, Sink};

#[derive(Parser, Debug)]
#[command(name = "deltashell", version, about = "Decay through a delta-shell barrier: poles, survival, fits, TDSE check")]
struct Cli {
    /// Directory for all outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Worker threads; 1 is the bit-deterministic reference.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Barrier strengths (comma separated).
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,

    /// Index n of the initial well eigenstate.
    #[arg(long)]
    state: Option<u32>,

    /// First output time in units of τ0.
    #[arg(long)]
    t_min: Option<f64>,

    /// Last output time in units of τ0.
    #[arg(long)]
    t_max: Option<f64>,

    /// Number of log-spaced output times.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resonance poles with lifetimes and Q-values.
    Poles {
        #[command(flatten)]
        model: ModelArgs,
        /// Poles per λ.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Survival probability series (raw time, t/τ0 and t/τ_fit).
    Survival {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Background, pole and interference parts of the survival probability.
    Decompose {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Finite-width barrier TDSE against the contour representation.
    TdseValidate {
        #[arg(long)]
        lambda: Option<f64>,
        /// Barrier widths in units of a (comma separated).
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// Domain length in units of a.
        #[arg(long)]
        domain: Option<f64>,
        /// Also write the wavefunction for the narrowest barrier.
        #[arg(long)]
        snapshot: bool,
    },
    /// Exponential and power-law fits with regime diagnostics.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        /// Survival CSV to fit instead of computing one (times in units m = a = ħ = 1).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reproduce the pole-weight, exponent and lifetime tables.
    Tables {
        #[command(flatten)]
        model: ModelArgs,
        /// Tables to build (comma separated, default all).
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3])]
        only: Vec<u8>,
    },
    /// λ-scan of a decay curve (measured or synthetic).
    Compare {
        /// Decay CSV with columns t_ns, intensity.
        #[arg(long)]
        input: Option<PathBuf>,
        /// λ grid (comma separated).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Physical scale m a² from λ, τ_th/τ0 and a measured lifetime.
    #[command(allow_negative_numbers = true)]
    Scale {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        tau_th_over_tau0: Option<f64>,
        #[arg(long)]
        tau_exp_ns: Option<f64>,
    },
}

/// Failure with its exit code: 2 usage, 3 numerical, 4 data.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::usage(format!("{}: {e}", path.display()))
    }
}

impl From<deltashell::Error> for CliError {
    fn from(e: deltashell::Error) -> Self {
        use deltashell::Error as E;
        let (code, kind) = match &e {
            e if e.is_numerical() => (3, "numerical"),
            E::Data(_) | E::Csv(_) | E::Json(_) => (4, "data"),
            _ => (2, "usage"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn apply_model(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(l) = &m.lambda {
        cfg.model.lambdas = l.clone();
    }
    if let Some(s) = m.state {
        cfg.model.state = s;
    }
    if let Some(t) = m.t_min {
        cfg.time.t_min_tau0 = t;
    }
    if let Some(t) = m.t_max {
        cfg.time.t_max_tau0 = t;
    }
    if let Some(p) = m.points {
        cfg.time.points = p;
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Poles { .. } => "poles",
        Command::Survival { .. } => "survival",
        Command::Decompose { .. } => "decompose",
        Command::TdseValidate { .. } => "tdse-validate",
        Command::Fit { .. } => "fit",
        Command::Tables { .. } => "tables",
        Command::Compare { .. } => "compare",
        Command::Scale { .. } => "scale",
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Poles { model, count } => {
            apply_model(&mut cfg, model);
            if let Some(c) = count {
                cfg.poles.count = *c;
            }
        }
        Command::Survival { model } | Command::Decompose { model } | Command::Tables { model, .. } => {
            apply_model(&mut cfg, model)
        }
        Command::Fit { model, .. } => apply_model(&mut cfg, model),
        Command::TdseValidate {
            lambda,
            deltas,
            domain,
            snapshot,
        } => {
            let t = &mut cfg.tdse;
            t.lambda = lambda.unwrap_or(t.lambda);
            if let Some(d) = deltas {
                t.deltas = d.clone();
            }
            t.domain_length = domain.unwrap_or(t.domain_length);
            t.snapshot |= *snapshot;
        }
        Command::Compare { input, grid } => {
            if let Some(i) = input {
                cfg.compare.input = Some(i.clone());
            }
            if let Some(g) = grid {
                cfg.compare.lambda_grid = g.clone();
            }
        }
        Command::Scale {
            lambda,
            tau_th_over_tau0,
            tau_exp_ns,
        } => {
            let s = &mut cfg.scale;
            s.lambda = lambda.unwrap_or(s.lambda);
            s.tau_th_over_tau0 = tau_th_over_tau0.unwrap_or(s.tau_th_over_tau0);
            s.tau_exp_ns = tau_exp_ns.unwrap_or(s.tau_exp_ns);
        }
    }
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(Vec::new());
    }
    cfg.validate()?;

    let threads = match cli.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be >= 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;

    let name = command_name(&cli.command);
    let mut sink = Sink::new(&cli.output_dir, cli.format, Provenance::new(name, &cfg))?;
    pool.install(|| match &cli.command {
        Command::Poles { .. } => commands::poles(&cfg, &mut sink),
        Command::Survival { .. } => commands::survival(&cfg, &mut sink),
        Command::Decompose { .. } => commands::decompose(&cfg, &mut sink),
        Command::TdseValidate { .. } => commands::tdse_validate(&cfg, &mut sink),
        Command::Fit { input, .. } => commands::fit(&cfg, input.as_deref(), &mut sink),
        Command::Tables { only, .. } => commands::tables(&cfg, only, &mut sink),
        Command::Compare { .. } => commands::compare(&cfg, None, &mut sink),
        Command::Scale { .. } => commands::scale(&cfg, &mut sink),
    })?;
    Ok(sink.written)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", json!({ "error": { "kind": err.kind, "code": err.code, "message": err.message } }));
            return ExitCode::from(err.code);
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", json!({ "error": { "kind": err.kind, "code": err.code, "message": err.message } }));
            ExitCode::from(err.code)
        }
    }
}
