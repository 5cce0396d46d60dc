use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdarwin::experiment::{exit_code, grid_summary, run_experiment, ExperimentConfig, Operation, ReportBundle, EXIT_CONTRACT};
use qdarwin::scenarios::GridScenario;
use qdarwin::tensor::C64;
use qdarwin::Error;

const DEFAULT_OUT_DIR: &str = "qdarwin-out";

#[derive(Parser)]
#[command(name = "qdarwin", version, about = "Redundant records, covering predicates, joint measurability and Markov blankets")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report.jsonl and the CSV tables.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Slack added to analytic bounds before they count as violated.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a built-in scenario and print its summary.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Redundancy audits of the configured families.
    AuditRecords { config: PathBuf },
    /// Non pair-covering and non tuple-covering predicates.
    CheckCovering { config: PathBuf },
    /// Joint-measurability search and constructive parents.
    CertifyJm { config: PathBuf },
    /// Markov-blanket search on the scenario channel.
    FindBlanket { config: PathBuf },
    /// Deviation bound for the blanket's measure-and-prepare approximation.
    VerifyBound { config: PathBuf },
    /// Every analysis present in the config.
    Run { config: PathBuf },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// N×N qubit grid α|0̄⟩ + β|1̄⟩ with optional depolarizing noise.
    Grid {
        #[arg(long)]
        n: usize,
        /// Complex amplitude as `re,im`.
        #[arg(long, value_parser = parse_complex, default_value = "1,0", allow_hyphen_values = true)]
        alpha: C64,
        #[arg(long, value_parser = parse_complex, default_value = "0,0", allow_hyphen_values = true)]
        beta: C64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

fn parse_complex(s: &str) -> Result<C64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parse = |t: &str| t.parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    match parts.as_slice() {
        [re] => Ok(C64::new(parse(re)?, 0.0)),
        [re, im] => Ok(C64::new(parse(re)?, parse(im)?)),
        _ => Err(format!("expected re,im but got '{s}'")),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e) as u8)
}

fn write_bundle(bundle: &ReportBundle, dir: &Path) -> Result<(), Error> {
    for path in bundle.write(dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run_config(global: &Global, path: &Path, ops: &[Operation]) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(t) = global.tol {
        cfg.tol = t;
    }
    let dir = global.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let bundle = match run_experiment(&cfg, ops) {
        Ok(b) => b,
        Err(e) => return fail(&e),
    };
    if let Err(e) = write_bundle(&bundle, &dir) {
        return fail(&e);
    }
    if let Some(summary) = bundle.records.last() {
        println!("{summary}");
    }
    if bundle.passed() {
        ExitCode::SUCCESS
    } else {
        for v in &bundle.violations {
            eprintln!("contract violation: {v}");
        }
        ExitCode::from(EXIT_CONTRACT as u8)
    }
}

/// `certify-jm` runs whichever of the two sections the config has.
fn certify_ops(path: &Path) -> Result<Vec<Operation>, Error> {
    let cfg = ExperimentConfig::load(path)?;
    let mut ops = Vec::new();
    if cfg.jm.is_some() {
        ops.push(Operation::Jm);
    }
    if cfg.certify.is_some() {
        ops.push(Operation::Certify);
    }
    if ops.is_empty() {
        return Err(Error::Config("the config has neither a [jm] nor a [certify] section".into()));
    }
    Ok(ops)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    match &cli.command {
        Command::Scenario(ScenarioCommand::Grid { n, alpha, beta, noise }) => {
            let summary = GridScenario::new(*n, *alpha, *beta, *noise).and_then(|s| grid_summary(&s));
            match summary {
                Ok(v) => {
                    if let Some(dir) = &g.out_dir {
                        let bundle = ReportBundle { records: vec![v.clone()], ..Default::default() };
                        if let Err(e) = write_bundle(&bundle, dir) {
                            return fail(&e);
                        }
                    }
                    println!("{v}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::AuditRecords { config } => run_config(g, config, &[Operation::Audit]),
        Command::CheckCovering { config } => run_config(g, config, &[Operation::Covering]),
        Command::CertifyJm { config } => match certify_ops(config) {
            Ok(ops) => run_config(g, config, &ops),
            Err(e) => fail(&e),
        },
        Command::FindBlanket { config } => run_config(g, config, &[Operation::Blanket]),
        Command::VerifyBound { config } => run_config(g, config, &[Operation::Bound]),
        Command::Run { config } => run_config(g, config, &[]),
    }
}
