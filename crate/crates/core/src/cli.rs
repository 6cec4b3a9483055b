//! Command-line interface: one binary that serves mocks, records traces,
//! runs the demo stack and its workload, evaluates suites, and works with
//! contract documents.
//!
//! Every subcommand takes `--config file.json` (a serialized
//! [`RunConfig`]); flags given on the command line override the file. Exit
//! codes: 0 success, 1 usage or configuration error, 2 infrastructure
//! error (unreachable endpoint, failed report write).

use crate::config::{MockMode, Provider, RunConfig};
use crate::harness::report::{write_reports, PriceTable};
use crate::harness::runner::{run_suite, EvalConfig};
use crate::harness::Suite;
use crate::host::{self, IrSim, MinerSim, OnlineSim, ReplaySim, Simulator};
use crate::ir::generate::{generate, GenerationRequest};
use crate::ir::{ContractIR, IrError, IrVersion};
use crate::sim::client::{ModelClient, RemoteClient, Sampling, ScriptedClient};
use crate::sim::prompt::{DepSource, SignalConfig, SignalMode, TRACE_SUMMARY_BUDGET};
use crate::sim::SimSession;
use crate::trace::{PathNormalizer, TraceStore};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(
    name = "depsim",
    version,
    about = "Dependency-simulation workbench: serve mock dependencies, record traces, and measure simulation fidelity"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve a mock dependency in one of the four engine modes.
    Mock {
        #[command(subcommand)]
        command: MockCommand,
    },
    /// Record live traffic.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// The reference demo services and their workload.
    Demo {
        #[command(subcommand)]
        command: DemoCommand,
    },
    /// Fidelity evaluation.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Contract documents.
    Ir {
        #[command(subcommand)]
        command: IrCommand,
    },
}

#[derive(Debug, Subcommand)]
enum MockCommand {
    /// Start a mock host; `/__mock__/reset` and `/__mock__/scenario` are
    /// always served alongside the simulated routes.
    Serve(MockServeArgs),
}

#[derive(Debug, Subcommand)]
enum TraceCommand {
    /// Reverse proxy that forwards to an upstream service and appends every
    /// exchange to a JSONL trace file.
    Record(TraceRecordArgs),
}

#[derive(Debug, Subcommand)]
enum DemoCommand {
    /// Run the four demo services (inventory, payment, shipping, order).
    Serve(DemoServeArgs),
    /// Drive the deterministic happy-path workload against running services.
    Workload(DemoWorkloadArgs),
    /// Stand up the stack behind recording proxies, run the workload, and
    /// write per-service trace files.
    Capture(DemoCaptureArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Run a scenario suite against a live service and a simulated one,
    /// score fidelity, and write the report files.
    Run(EvalRunArgs),
}

#[derive(Debug, Subcommand)]
enum IrCommand {
    /// Check a contract document and print its diagnostics.
    Validate(IrValidateArgs),
    /// Ask a model to write a contract document, validate it (with one
    /// repair round), and save it.
    Generate(IrGenerateArgs),
}

/// Overlays each present flag onto the config loaded from `--config` (or
/// the default), so flags win.
macro_rules! overlay {
    ($cfg:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $( if $args.$field.is_some() { $cfg.$field = $args.$field.clone(); } )*
    };
}

#[derive(Debug, Args)]
struct MockServeArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Engine: replay | pattern | ir | online.
    #[arg(long)]
    mode: Option<String>,
    /// Port to listen on (0 picks an ephemeral port, printed on startup).
    #[arg(long)]
    port: Option<u16>,
    /// JSONL trace file (replay and pattern modes; online modes with a
    /// traces signal).
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Id-segment regex for trace path normalization, e.g. `item-[0-9]+`;
    /// repeatable. All-digit and UUID segments are always recognized.
    #[arg(long = "id-pattern", value_name = "REGEX")]
    id_pattern: Vec<String>,
    /// Contract document (ir mode).
    #[arg(long)]
    ir: Option<PathBuf>,
    /// Signals for online mode: wb | bb | dep | caller | traces.
    #[arg(long)]
    signals: Option<String>,
    /// Source of the simulated service: a file or a directory of files.
    #[arg(long)]
    dep_src: Option<PathBuf>,
    /// Source of the calling service: a file or a directory of files.
    #[arg(long)]
    caller_src: Option<PathBuf>,
    /// Model client for online mode: scripted | remote.
    #[arg(long)]
    provider: Option<String>,
    /// Reply script for the scripted provider.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Chat-completions URL for the remote provider.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name for the remote provider.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the remote provider's API key.
    #[arg(long)]
    api_key_env: Option<String>,
}

#[derive(Debug, Args)]
struct TraceRecordArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base URL of the real service to forward to.
    #[arg(long)]
    upstream: Option<String>,
    /// Service name stored on each recorded line.
    #[arg(long)]
    service: Option<String>,
    /// JSONL file to append interactions to.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Debug, Args)]
struct DemoServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    inventory_port: Option<u16>,
    #[arg(long)]
    payment_port: Option<u16>,
    #[arg(long)]
    shipping_port: Option<u16>,
    #[arg(long)]
    order_port: Option<u16>,
}

#[derive(Debug, Args)]
struct DemoWorkloadArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    inventory_port: Option<u16>,
    #[arg(long)]
    payment_port: Option<u16>,
    #[arg(long)]
    shipping_port: Option<u16>,
    #[arg(long)]
    order_port: Option<u16>,
    /// Workload rounds to run.
    #[arg(long)]
    rounds: Option<u32>,
    /// RNG seed; the same seed replays the same request stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DemoCaptureArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the per-service JSONL trace files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalRunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario suite file.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Base URL of the live service.
    #[arg(long)]
    live: Option<String>,
    /// Base URL of the simulated service.
    #[arg(long)]
    sim: Option<String>,
    /// Skip the scenario-context injection before simulated calls.
    #[arg(long)]
    no_inject_context: bool,
    /// Price table JSON for cost estimation.
    #[arg(long)]
    price_table: Option<PathBuf>,
    /// Model name recorded (and priced) in the report.
    #[arg(long)]
    model: Option<String>,
    /// Directory for report.json, report.txt, timing.json, transcript.jsonl.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IrValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Contract document to check.
    #[arg(long)]
    ir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IrGenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Document tier to request: v1 | v2.
    #[arg(long)]
    version: Option<String>,
    /// Name of the service the contract describes.
    #[arg(long)]
    service: Option<String>,
    /// Source of the service: a file or a directory of files.
    #[arg(long)]
    dep_src: Option<PathBuf>,
    /// JSONL traces summarized into the prompt.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Id-segment regex for trace path normalization; repeatable.
    #[arg(long = "id-pattern", value_name = "REGEX")]
    id_pattern: Vec<String>,
    /// Where to save the validated document.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs, invalid documents: exit 1.
    Usage(String),
    /// Endpoints or filesystem failing at run time: exit 2.
    Infra(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }
}

/// Parses the process arguments, runs the subcommand, and returns the exit
/// code.
pub async fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli).await {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Infra(message)) => {
            eprintln!("error: {message}");
            2
        }
    }
}

async fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mock {
            command: MockCommand::Serve(args),
        } => mock_serve(args).await,
        Command::Trace {
            command: TraceCommand::Record(args),
        } => trace_record(args).await,
        Command::Demo {
            command: DemoCommand::Serve(args),
        } => demo_serve(args).await,
        Command::Demo {
            command: DemoCommand::Workload(args),
        } => demo_workload(args).await,
        Command::Demo {
            command: DemoCommand::Capture(args),
        } => demo_capture(args).await,
        Command::Eval {
            command: EvalCommand::Run(args),
        } => eval_run(args).await,
        Command::Ir {
            command: IrCommand::Validate(args),
        } => ir_validate(args),
        Command::Ir {
            command: IrCommand::Generate(args),
        } => ir_generate(args).await,
    }
}

fn base_config(path: &Option<PathBuf>, subcommand: &str) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    cfg.subcommand = subcommand.to_string();
    Ok(cfg)
}

fn check(cfg: &RunConfig, subcommand: &str) -> Result<(), CliError> {
    let problems = cfg.validate(subcommand);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(problems.join("\n")))
    }
}

/// Reads a source file, or every file directly inside a source directory
/// (sorted by name).
fn load_source_files(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let read = |p: &Path| -> Result<String, CliError> {
        std::fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
    };
    if path.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Usage(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        let mut files = Vec::with_capacity(names.len());
        for p in &names {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            files.push((name, read(p)?));
        }
        if files.is_empty() {
            return Err(CliError::Usage(format!(
                "{} contains no source files",
                path.display()
            )));
        }
        Ok(files)
    } else {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(vec![(name, read(path)?)])
    }
}

fn load_dep_source(path: &Path) -> Result<DepSource, CliError> {
    let mut files = load_source_files(path)?;
    if path.is_dir() {
        Ok(DepSource::Multi(files))
    } else {
        let (name, content) = files.remove(0);
        Ok(DepSource::Single { name, content })
    }
}

/// Caller source is one prompt section; multiple files are joined under
/// `--- name ---` headers.
fn load_caller_source(path: &Path) -> Result<String, CliError> {
    let files = load_source_files(path)?;
    if !path.is_dir() {
        return Ok(files.into_iter().next().expect("one file").1);
    }
    let mut joined = String::new();
    for (name, content) in &files {
        joined.push_str(&format!("--- {name} ---\n"));
        joined.push_str(content);
        if !content.ends_with('\n') {
            joined.push('\n');
        }
    }
    Ok(joined)
}

fn load_traces(cfg: &RunConfig) -> Result<TraceStore, CliError> {
    let path = cfg.traces.as_ref().expect("validated");
    let normalizer = PathNormalizer::with_patterns(&cfg.id_patterns).map_err(CliError::usage)?;
    TraceStore::load_with(path, normalizer).map_err(CliError::usage)
}

fn build_model_client(cfg: &RunConfig) -> Result<Arc<dyn ModelClient>, CliError> {
    match cfg.provider.expect("validated") {
        Provider::Scripted => {
            let script = cfg.script.as_ref().expect("validated");
            Ok(Arc::new(
                ScriptedClient::from_file(script).map_err(CliError::usage)?,
            ))
        }
        Provider::Remote => Ok(Arc::new(RemoteClient::new(
            cfg.endpoint.clone().expect("validated"),
            cfg.model.clone().expect("validated"),
            cfg.api_key_env.as_deref(),
            Sampling::default(),
        ))),
    }
}

/// Builds the signal set for the requested mode, warning about provided
/// inputs the mode does not use.
fn build_signals(cfg: &RunConfig) -> Result<SignalConfig, CliError> {
    let mode = SignalMode::parse(&cfg.signals_label().expect("validated")).expect("validated");
    let (want_dep, want_caller, want_traces) = match mode {
        SignalMode::WhiteBox => (true, true, true),
        SignalMode::BlackBox => (false, true, true),
        SignalMode::DepOnly => (true, false, false),
        SignalMode::CallerOnly => (false, true, false),
        SignalMode::TracesOnly => (false, false, true),
    };
    for (provided, wanted, flag) in [
        (cfg.dep_src.is_some(), want_dep, "--dep-src"),
        (cfg.caller_src.is_some(), want_caller, "--caller-src"),
        (cfg.traces.is_some(), want_traces, "--traces"),
    ] {
        if provided && !wanted {
            eprintln!("note: {flag} is not used in {} mode", mode.label());
        }
    }
    let dep = if want_dep {
        Some(load_dep_source(cfg.dep_src.as_ref().expect("validated"))?)
    } else {
        None
    };
    let caller = if want_caller {
        Some(load_caller_source(cfg.caller_src.as_ref().expect("validated"))?)
    } else {
        None
    };
    let traces = if want_traces {
        let store = load_traces(cfg)?;
        Some(store.summarize(TRACE_SUMMARY_BUDGET))
    } else {
        None
    };
    SignalConfig::new(dep, caller, traces).map_err(CliError::usage)
}

fn build_simulator(cfg: &RunConfig) -> Result<Box<dyn Simulator>, CliError> {
    match cfg.mode.expect("validated") {
        MockMode::Replay => {
            let store = load_traces(cfg)?;
            Ok(Box::new(ReplaySim(crate::replay::build_index(&store))))
        }
        MockMode::Pattern => {
            let store = load_traces(cfg)?;
            let model = crate::miner::mine(&store);
            Ok(Box::new(MinerSim(model.session().map_err(CliError::usage)?)))
        }
        MockMode::Ir => {
            let doc = ContractIR::load(cfg.ir.as_ref().expect("validated"))
                .map_err(CliError::usage)?;
            let session = crate::ir::interp::IrSession::new(doc).map_err(CliError::usage)?;
            Ok(Box::new(IrSim(session)))
        }
        MockMode::Online => {
            let signals = build_signals(cfg)?;
            let client = build_model_client(cfg)?;
            Ok(Box::new(OnlineSim(SimSession::new(client, &signals))))
        }
    }
}

async fn wait_for_interrupt() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn mock_serve(args: MockServeArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "mock serve")?;
    overlay!(cfg, args, [port, traces, ir, signals, dep_src, caller_src, script, endpoint, model, api_key_env]);
    if !args.id_pattern.is_empty() {
        cfg.id_patterns = args.id_pattern.clone();
    }
    if let Some(mode) = &args.mode {
        cfg.mode = Some(
            MockMode::parse(mode)
                .ok_or_else(|| CliError::Usage(format!("unknown mode {mode:?} (replay | pattern | ir | online)")))?,
        );
    }
    if let Some(provider) = &args.provider {
        cfg.provider = Some(
            Provider::parse(provider)
                .ok_or_else(|| CliError::Usage(format!("unknown provider {provider:?} (scripted | remote)")))?,
        );
    }
    check(&cfg, "mock serve")?;

    let sim = build_simulator(&cfg)?;
    let handle = host::serve(sim, cfg.port.unwrap_or(0))
        .await
        .map_err(CliError::usage)?;
    println!("listening on {}", handle.base_url());
    wait_for_interrupt().await;
    handle.shutdown().await;
    Ok(())
}

async fn trace_record(args: TraceRecordArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "trace record")?;
    overlay!(cfg, args, [upstream, service, out, port]);
    check(&cfg, "trace record")?;

    let upstream = cfg.upstream.clone().expect("validated");
    let service = cfg.service.clone().unwrap_or_else(|| "service".to_string());
    let out = cfg.out.clone().expect("validated");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::usage)?;
    }
    let handle = crate::proxy::serve_proxy(upstream, service, out, cfg.port.unwrap_or(0))
        .await
        .map_err(CliError::usage)?;
    println!("listening on {}", handle.base_url());
    wait_for_interrupt().await;
    handle.shutdown().await;
    Ok(())
}

async fn demo_serve(args: DemoServeArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "demo serve")?;
    overlay!(cfg, args, [inventory_port, payment_port, shipping_port, order_port]);
    check(&cfg, "demo serve")?;

    let ports = crate::demo::DemoPorts {
        inventory: cfg.inventory_port.unwrap_or(0),
        payment: cfg.payment_port.unwrap_or(0),
        shipping: cfg.shipping_port.unwrap_or(0),
        order: cfg.order_port.unwrap_or(0),
    };
    let stack = crate::demo::DemoStack::launch(ports, crate::demo::DemoConfig::default())
        .await
        .map_err(CliError::usage)?;
    println!("inventory listening on {}", stack.inventory.base_url());
    println!("payment listening on {}", stack.payment.base_url());
    println!("shipping listening on {}", stack.shipping.base_url());
    println!("order listening on {}", stack.order.base_url());
    wait_for_interrupt().await;
    stack.shutdown().await;
    Ok(())
}

async fn demo_workload(args: DemoWorkloadArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "demo workload")?;
    overlay!(cfg, args, [inventory_port, payment_port, shipping_port, order_port, rounds, seed]);
    check(&cfg, "demo workload")?;

    let base = |port: Option<u16>, default: u16| {
        format!("http://127.0.0.1:{}", port.unwrap_or(default))
    };
    let targets = crate::demo::workload::WorkloadTargets {
        inventory: base(cfg.inventory_port, 9201),
        payment: base(cfg.payment_port, 9202),
        shipping: base(cfg.shipping_port, 9203),
        order: base(cfg.order_port, 9204),
    };
    let report = crate::demo::workload::run_workload(
        &targets,
        cfg.rounds.unwrap_or(3),
        cfg.seed.unwrap_or(7),
    )
    .await
    .map_err(|e| CliError::Infra(e.to_string()))?;
    println!("workload complete: {} requests", report.requests);
    Ok(())
}

async fn demo_capture(args: DemoCaptureArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "demo capture")?;
    overlay!(cfg, args, [out_dir, rounds, seed]);
    check(&cfg, "demo capture")?;

    let paths = crate::demo::workload::capture_traces(
        cfg.rounds.unwrap_or(3),
        cfg.seed.unwrap_or(7),
        cfg.out_dir.as_ref().expect("validated"),
    )
    .await
    .map_err(|e| CliError::Infra(e.to_string()))?;
    println!("wrote {}", paths.inventory.display());
    println!("wrote {}", paths.payment.display());
    println!("wrote {}", paths.shipping.display());
    Ok(())
}

async fn eval_run(args: EvalRunArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "eval run")?;
    overlay!(cfg, args, [suite, live, sim, price_table, model, out_dir]);
    if args.no_inject_context {
        cfg.inject_context = Some(false);
    }
    check(&cfg, "eval run")?;

    let suite = Suite::load(cfg.suite.as_ref().expect("validated")).map_err(CliError::usage)?;
    let prices = match &cfg.price_table {
        Some(path) => Some(PriceTable::load(path).map_err(CliError::usage)?),
        None => None,
    };
    let eval = EvalConfig {
        live_base: cfg.live.clone().expect("validated").trim_end_matches('/').to_string(),
        sim_base: cfg.sim.clone().expect("validated").trim_end_matches('/').to_string(),
        inject_context: cfg.inject_context.unwrap_or(true),
        model: cfg.model.clone(),
    };
    let run = run_suite(&suite, &eval).await;
    let out_dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("eval-out"));
    let (paths, report) = write_reports(&run, prices.as_ref(), &out_dir)
        .map_err(|e| CliError::Infra(e.to_string()))?;
    print!("{}", report.render_text());
    println!("report written to {}", paths.report_json.display());

    let infra: Vec<&str> = run
        .outcomes
        .iter()
        .filter_map(|o| o.infra.as_deref())
        .collect();
    if infra.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infra(format!(
            "{} scenario(s) hit infrastructure errors: {}",
            infra.len(),
            infra.join("; ")
        )))
    }
}

fn ir_validate(args: IrValidateArgs) -> Result<(), CliError> {
    let cfg = {
        let mut cfg = base_config(&args.config, "ir validate")?;
        overlay!(cfg, args, [ir]);
        cfg
    };
    check(&cfg, "ir validate")?;

    let path = cfg.ir.as_ref().expect("validated");
    let doc = ContractIR::load(path).map_err(CliError::usage)?;
    let diagnostics = crate::ir::validate::validate(&doc);
    if diagnostics.is_empty() {
        println!(
            "ok: {} ({}, {} transition(s))",
            path.display(),
            doc.version,
            doc.transitions.len()
        );
        Ok(())
    } else {
        let mut message = format!("{} is invalid:", path.display());
        for d in &diagnostics {
            message.push_str(&format!("\n  - {d}"));
        }
        Err(CliError::Usage(message))
    }
}

async fn ir_generate(args: IrGenerateArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&args.config, "ir generate")?;
    overlay!(cfg, args, [version, service, dep_src, traces, out, script, endpoint, model, api_key_env]);
    if !args.id_pattern.is_empty() {
        cfg.id_patterns = args.id_pattern.clone();
    }
    if let Some(provider) = &args.provider {
        cfg.provider = Some(
            Provider::parse(provider)
                .ok_or_else(|| CliError::Usage(format!("unknown provider {provider:?} (scripted | remote)")))?,
        );
    }
    check(&cfg, "ir generate")?;

    let version = match cfg.version.as_deref() {
        Some("v1") => IrVersion::V1,
        _ => IrVersion::V2,
    };
    let dep_source = match &cfg.dep_src {
        Some(path) => {
            let files = load_source_files(path)?;
            let mut joined = String::new();
            for (name, content) in &files {
                if files.len() > 1 {
                    joined.push_str(&format!("--- {name} ---\n"));
                }
                joined.push_str(content);
            }
            Some(joined)
        }
        None => None,
    };
    let trace_summary = match &cfg.traces {
        Some(_) => Some(load_traces(&cfg)?.summarize(TRACE_SUMMARY_BUDGET)),
        None => None,
    };
    let service = cfg
        .service
        .clone()
        .or_else(|| {
            cfg.out
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "service".to_string());

    let client = build_model_client(&cfg)?;
    let request = GenerationRequest {
        version,
        service,
        dep_source,
        trace_summary,
    };
    let outcome = match generate(client.as_ref(), &request).await {
        Ok(outcome) => outcome,
        Err(IrError::Model(message)) => return Err(CliError::Infra(message)),
        Err(e) => return Err(CliError::usage(e)),
    };
    let out = cfg.out.as_ref().expect("validated");
    outcome.doc.save(out).map_err(CliError::usage)?;
    println!(
        "wrote {} after {} attempt(s)",
        out.display(),
        outcome.attempts.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        RunConfig {
            subcommand: "mock serve".to_string(),
            mode: Some(MockMode::Replay),
            traces: Some(PathBuf::from("from-file.jsonl")),
            port: Some(1),
            ..RunConfig::default()
        }
        .save(&file)
        .unwrap();

        let args = MockServeArgs {
            config: Some(file),
            mode: None,
            port: Some(2),
            traces: None,
            id_pattern: Vec::new(),
            ir: None,
            signals: None,
            dep_src: None,
            caller_src: None,
            provider: None,
            script: None,
            endpoint: None,
            model: None,
            api_key_env: None,
        };
        let mut cfg = base_config(&args.config, "mock serve").unwrap();
        overlay!(cfg, args, [port, traces]);
        assert_eq!(cfg.port, Some(2), "flag wins");
        assert_eq!(cfg.traces, Some(PathBuf::from("from-file.jsonl")), "file fills the gap");
        assert_eq!(cfg.mode, Some(MockMode::Replay));
    }

    #[test]
    fn command_tree_parses_the_documented_invocations() {
        for argv in [
            vec![
                "depsim", "mock", "serve", "--mode", "replay", "--traces", "t.jsonl", "--port",
                "9101", "--id-pattern", "item-[0-9]+", "--id-pattern", "rsv-[0-9]+",
            ],
            vec![
                "depsim", "mock", "serve", "--mode", "online", "--signals", "wb", "--dep-src",
                "./inventory", "--caller-src", "./order", "--traces", "t.jsonl", "--provider",
                "scripted", "--script", "s.json",
            ],
            vec!["depsim", "trace", "record", "--upstream", "http://127.0.0.1:9201", "--out", "t.jsonl"],
            vec!["depsim", "demo", "serve"],
            vec!["depsim", "demo", "capture", "--out-dir", "traces"],
            vec![
                "depsim", "eval", "run", "--suite", "s.json", "--live", "http://a", "--sim",
                "http://b", "--no-inject-context",
            ],
            vec!["depsim", "ir", "validate", "--ir", "doc.json"],
        ] {
            Cli::try_parse_from(&argv).unwrap_or_else(|e| panic!("{argv:?}: {e}"));
        }
    }
}
