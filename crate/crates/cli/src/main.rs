//! `fusionkit`: information-theoretic analysis of multimodal sensing
//! scenarios described in JSON.
//!
//! Exit codes: 0 success, 1 usage error, 2 scenario or validation error,
//! 3 numerical error.

mod commands;
mod failure;
mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fusionkit::estimators::Method;

use crate::commands::Output;
use crate::failure::CliError;
use crate::scenario::{parse_pair, Scenario};

#[derive(Debug, Parser)]
#[command(name = "fusionkit", version, about = "Fisher information, CRLB and fusion analysis for linear sensing models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SNR / Fisher information, CRLB and (for a pair) synergy matrices.
    Analyze {
        scenario: PathBuf,
        /// Analyze one modality.
        #[arg(long, conflicts_with = "joint", required_unless_present = "joint")]
        modality: Option<String>,
        /// Analyze two modalities jointly, given as `A,B`.
        #[arg(long, value_name = "A,B")]
        joint: Option<String>,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select, fuse, or flag redundancy for a pair of modalities.
    Advise {
        scenario: PathBuf,
        #[arg(long, value_name = "A,B")]
        pair: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal secondary configuration under an SNR budget.
    Place {
        scenario: PathBuf,
        #[arg(long)]
        primary: String,
        #[arg(long)]
        budget: f64,
        /// Modality whose noise defines the cross-correlation; defaults to
        /// the only other modality in the scenario.
        #[arg(long)]
        secondary: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo error-covariance campaign with a CRLB check.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "N", value_name = "N")]
        samples: usize,
        #[arg(long)]
        seed: u64,
        /// Modality to simulate; defaults to the first one.
        #[arg(long)]
        modality: Option<String>,
        /// JSON report path; the CSV row goes next to it with a `.csv` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Ml,
    Wls,
    Mmse,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ml => Method::Ml,
            MethodArg::Wls => Method::Wls,
            MethodArg::Mmse => Method::Mmse,
        }
    }
}

const MIN_CAMPAIGN_SAMPLES: usize = 1000;

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FUSIONKIT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("FUSIONKIT_THREADS must be a non-negative integer, got {raw:?}")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(output: &Output, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&output.json).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => {
            write_file(path, &text)?;
            if let Some(csv) = &output.csv {
                write_file(&path.with_extension("csv"), csv)?;
            }
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Usage(format!("cannot write to standard output: {e}")))?;
        }
    }
    eprintln!("{}", output.summary);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze {
            scenario,
            modality,
            joint,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let output = match (modality, joint) {
                (Some(name), None) => commands::analyze_modality(&sc, &name)?,
                (None, Some(spec)) => {
                    let (a, b) = parse_pair(&spec)?;
                    commands::analyze_joint(&sc, &a, &b)?
                }
                _ => return Err(CliError::Usage("give exactly one of --modality or --joint".into())),
            };
            emit(&output, out.as_deref())
        }
        Command::Advise { scenario, pair, out } => {
            let (a, b) = parse_pair(&pair)?;
            let sc = Scenario::load(&scenario)?;
            emit(&commands::advise_pair(&sc, &a, &b)?, out.as_deref())
        }
        Command::Place {
            scenario,
            primary,
            budget,
            secondary,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let secondary = match secondary {
                Some(s) => s,
                None => sc.only_other(&primary)?.to_owned(),
            };
            emit(&commands::place(&sc, &primary, &secondary, budget)?, out.as_deref())
        }
        Command::Simulate {
            scenario,
            method,
            samples,
            seed,
            modality,
            out,
        } => {
            if samples < MIN_CAMPAIGN_SAMPLES {
                return Err(CliError::Usage(format!("--N must be at least {MIN_CAMPAIGN_SAMPLES}, got {samples}")));
            }
            if out.as_deref().and_then(Path::extension).is_some_and(|e| e == "csv") {
                return Err(CliError::Usage("--out names the JSON report; the CSV path is derived from it".into()));
            }
            let sc = Scenario::load(&scenario)?;
            let name = match modality {
                Some(n) => n,
                None => sc.modalities[0].name.clone(),
            };
            emit(&commands::simulate(&sc, &name, method.into(), samples, seed)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fusionkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
