use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use socbench_core::bench::{
    aggregate_from_dir, export_report, import_responses, run_benchmark, BenchError, BenchmarkPlan,
    ExportFormat,
};
use socbench_core::scenario::{load_overrides_file, ScenarioError};
use socbench_core::sim::PedestrianMode;
use socbench_core::{Layout, MethodId};
use socbench_gateway::GatewayError;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

/// Only environment variable read by the tool: the log filter.
const LOG_ENV: &str = "BENCH_LOG";

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "bench", version, about = "Social navigation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a method x layout x seed grid and write logs plus a report.
    Run(RunArgs),
    /// Rebuild the report from persisted logs, optionally with questionnaire responses.
    Report(ReportArgs),
    /// Serve interactive sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodId>>,
    #[arg(long, value_delimiter = ',')]
    layouts: Option<Vec<Layout>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Seeds run are seed-base, seed-base + 1, ...
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long)]
    ped_mode: Option<PedestrianMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Questionnaire responses, CSV or JSON.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ExportFormat,
    /// Where to write the exported files; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Session store directory.
    #[arg(long, default_value = "sessions")]
    data: PathBuf,
    /// Scenario TOML for live trials.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layout of live trials, unless the scenario file names one.
    #[arg(long, default_value = "coinciding")]
    layout: Layout,
    /// Methods each participant runs, in Latin square order.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodId>>,
}

fn plan_from(args: RunArgs) -> Result<BenchmarkPlan> {
    let mut plan = BenchmarkPlan::default_plan(args.out);
    if let Some(path) = &args.config {
        plan.scenario = load_overrides_file(path)?;
    }
    if let Some(m) = args.methods {
        plan.methods = m;
    }
    if let Some(l) = args.layouts {
        plan.layouts = l;
    }
    if let Some(n) = args.trials {
        plan.trials_per_cell = n;
    }
    plan.seeds = (0..plan.trials_per_cell as u64)
        .map(|i| args.seed_base + i)
        .collect();
    if let Some(p) = args.ped_mode {
        plan.ped_mode = p;
    }
    Ok(plan)
}

fn summarize(report: &socbench_core::bench::BenchmarkReport) {
    for m in &report.methods {
        let v = m.rcm;
        println!(
            "{:>6}  n={:<3} r_haza={:.3} r_extra_human={:.3} r_dist={:.3} r_dec={:.3} r_extra_robot={:.3} r_succ={:.3}",
            m.method.to_string(),
            m.n_trials,
            v.r_haza,
            v.r_extra_human,
            v.r_dist,
            v.r_dec,
            v.r_extra_robot,
            v.r_succ
        );
    }
    for c in report.cells.iter().filter(|c| c.failure.is_some()) {
        eprintln!(
            "cell {} / {} failed: {}",
            c.method,
            c.layout,
            c.failure.as_deref().unwrap_or("")
        );
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let plan = plan_from(args)?;
    let report = run_benchmark(&plan)?;
    summarize(&report);
    println!("logs and report written to {}", plan.output_dir.display());
    Ok(if report.has_failures() {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    })
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let responses = args
        .responses
        .as_deref()
        .map(import_responses)
        .transpose()?;
    let report = aggregate_from_dir(&args.input, responses.as_ref())?;
    let out = args.out.unwrap_or(args.input);
    for path in export_report(&report, args.format, &out)? {
        println!("{}", path.display());
    }
    Ok(if report.has_failures() {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    })
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid listen address")?;
    let mut config = socbench_gateway::GatewayConfig::new(args.data);
    if let Some(path) = &args.config {
        config.scenario = load_overrides_file(path)?;
    }
    config.layout = args.layout;
    if let Some(m) = args.methods {
        config.methods = m;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(socbench_gateway::serve(config, addr))?;
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ScenarioError>().is_some() {
        return EXIT_VALIDATION;
    }
    if let Some(
        GatewayError::Scenario(_) | GatewayError::InvalidConfig(_) | GatewayError::Policy(_),
    ) = err.downcast_ref::<GatewayError>()
    {
        return EXIT_VALIDATION;
    }
    match err.downcast_ref::<BenchError>() {
        Some(
            BenchError::InvalidPlan(_)
            | BenchError::Scenario(_)
            | BenchError::Import(_)
            | BenchError::Rosas(_),
        ) => EXIT_VALIDATION,
        Some(BenchError::NoSuccessfulCells) => EXIT_PARTIAL,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
