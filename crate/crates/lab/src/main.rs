use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reig_core::robust::RobustMode;
use reig_lab::config::{EstimatorName, ProposalChoice, RunConfig};
use reig_lab::figures::{self, FigureName, FigureOptions};
use reig_lab::models::ModelName;
use reig_lab::record::write_records;
use reig_lab::report::{self, ReportOptions};
use reig_lab::runner::run;
use reig_lab::Result;

#[derive(Parser)]
#[command(name = "reig-lab", version, about = "Robust expected information gain experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate (robust) EIG over a design grid and write CSV records.
    Run(RunArgs),
    /// Emit the data behind one of the figures as long-format CSV.
    Figure(FigureArgs),
    /// Run every oracle cross-check and print a pass/fail CSV.
    OracleReport(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelName>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorName>,
    #[arg(long, value_parser = parse_mode)]
    robust_mode: Option<RobustMode>,
    /// Comma-separated ambiguity radii.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated seeds (default: config, then $REIG_LAB_SEED, then 0).
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Comma-separated design labels.
    #[arg(long, value_delimiter = ',')]
    designs: Option<Vec<String>>,
    #[arg(long, value_enum)]
    proposal: Option<ProposalChoice>,
    #[arg(long)]
    proposal_cache: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write runtime_ms = 0 so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    name: FigureName,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Smaller sample sizes for a quick look.
    #[arg(long)]
    fast: bool,
    #[arg(long, env = "REIG_LAB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Tolerance of the dual-versus-grid cross-check.
    #[arg(long, default_value_t = report::DUALITY_TOLERANCE)]
    duality_tolerance: f64,
    /// Comma-separated models whose checks run.
    #[arg(long, value_delimiter = ',', default_value = "diagnostic,ab,pk")]
    models: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<RobustMode, String> {
    s.parse().map_err(|e: reig_core::Error| e.to_string())
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run_command(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $value:expr),*) => { $(if let Some(v) = $value { config.$field = v; })* };
    }
    set!(model <- args.model, estimator <- args.estimator, robust_mode <- args.robust_mode,
         epsilon <- args.epsilon, n1 <- args.n1, n2 <- args.n2, m <- args.m, proposal <- args.proposal,
         workers <- args.workers);
    if args.seed.is_some() {
        config.seeds = args.seed;
    }
    if args.designs.is_some() {
        config.designs = args.designs;
    }
    if args.proposal_cache.is_some() {
        config.proposal_cache = args.proposal_cache;
    }
    if args.out.is_some() {
        config.out = args.out;
    }
    if args.no_timing {
        config.timing = false;
    }
    let result = run(&config)?;
    for failure in &result.failures {
        eprintln!("skipped: {failure}");
    }
    write_records(output(config.out.as_ref())?, &result.records)
}

fn figure_command(args: FigureArgs) -> Result<()> {
    let options = FigureOptions { fast: args.fast, seed: args.seed, workers: args.workers };
    let rows = figures::figure(args.name, &options)?;
    figures::write_rows(output(args.out.as_ref())?, &rows)
}

fn report_command(args: ReportArgs) -> Result<bool> {
    let models = args
        .models
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| m.trim().parse())
        .collect::<Result<Vec<ModelName>>>()?;
    let options = ReportOptions { duality_tolerance: args.duality_tolerance, models };
    let checks = report::oracle_report(&options)?;
    report::write_checks(output(args.out.as_ref())?, &checks)?;
    Ok(report::all_pass(&checks))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args).map(|_| true),
        Command::Figure(args) => figure_command(args).map(|_| true),
        Command::OracleReport(args) => report_command(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
