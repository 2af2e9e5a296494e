use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use vislens_core::harness::{self, HarnessError, RunConfig};
use vislens_core::model::live::{LiveBackend, LiveConfig};
use vislens_core::model::replay::{RecordingFactory, ReplayFactory};
use vislens_core::model::scripted::PolicyKind;
use vislens_core::model::{BackendFactory, ScriptedFactory, SharedBackend};
use vislens_core::raster::Raster;
use vislens_core::routing::TaskKind;
use vislens_core::stimulus::{self, StimulusKind};
use vislens_core::tools::Point;

#[derive(Parser)]
#[command(name = "vislens", version, about = "Tool-using visual reasoning harness")]
struct Cli {
    /// Log at debug level (request bodies are logged with images elided).
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent over every manifest entry.
    Run(RunArgs),
    /// Score a results file against the manifest labels.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Per-tool usage fractions over a run directory.
    Stats {
        /// Run output directory holding one subdirectory per sample.
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Measure how lossy JPEG storage moves sampled colors.
    Sweep {
        #[arg(long)]
        image: PathBuf,
        /// File with one x,y probe point per line.
        #[arg(long, required_unless_present = "probe")]
        probes: Option<PathBuf>,
        /// Inline probe point as x,y. Repeatable.
        #[arg(long, value_parser = parse_point)]
        probe: Vec<Point>,
        #[arg(long, value_delimiter = ',', default_value = "30,50,70,90")]
        qualities: Vec<u8>,
        #[arg(long)]
        json: bool,
    },
    /// Generate a labeled synthetic stimulus set.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated stimulus kinds; all by default.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[arg(long, default_value_t = 10)]
        per_kind: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = stimulus::DEFAULT_SIZE)]
        size: u32,
        /// Emit a matched positive/negative pair per seed.
        #[arg(long)]
        balance: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// live, scripted:<oracle|always_positive|never_finalize>, or replay:<dir>.
    #[arg(long, default_value = "live")]
    backend: String,
    /// Record every backend exchange under this directory.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Probe sidecar for scripted policies; defaults to probes.json beside the manifest.
    #[arg(long)]
    probes: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 10)]
    max_rounds: usize,
    #[arg(long, default_value_t = 3)]
    rescue_rounds: usize,
    /// Only run entries of this task (1 or 2).
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    fallback_model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Downscale images whose longer edge exceeds this before sending.
    #[arg(long)]
    max_image_edge: Option<u32>,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let n = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Point { x: n(x)?, y: n(y)? })
}

fn read_probes(path: &Path) -> Result<Vec<Point>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_point(l).map_err(|e| Failure::Validation(format!("{}: {e}", path.display()))))
        .collect()
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::parse(s).ok_or_else(|| format!("unknown task {s:?}; use 1 or 2"))
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn scripted_factory(kind: PolicyKind, probes: &Path) -> Result<ScriptedFactory, Failure> {
    let probes = if probes.exists() {
        stimulus::load_probes(probes).map_err(|e| Failure::Validation(e.to_string()))?
    } else if kind == PolicyKind::NeverFinalize {
        Default::default()
    } else {
        return Err(Failure::Validation(format!(
            "scripted:{} needs probe annotations; {} does not exist",
            kind.as_str(),
            probes.display()
        )));
    };
    Ok(ScriptedFactory {
        kind,
        probes: probes.into_iter().collect(),
    })
}

fn factory(args: &RunArgs, verbose: bool) -> Result<Box<dyn BackendFactory>, Failure> {
    let spec = args.backend.as_str();
    let inner: Box<dyn BackendFactory> = if spec == "live" {
        let mut config = LiveConfig {
            api_key_env: args.api_key_env.clone(),
            verbose,
            max_image_edge: args.max_image_edge,
            timeout: Duration::from_secs(args.timeout_secs),
            ..LiveConfig::default()
        };
        if let Some(endpoint) = &args.endpoint {
            config.endpoint = endpoint.clone();
        }
        let name = format!("live:{}", config.endpoint);
        let backend = LiveBackend::new(config).map_err(|e| Failure::Validation(e.to_string()))?;
        Box::new(SharedBackend(Arc::new(backend), name))
    } else if let Some(policy) = spec.strip_prefix("scripted:") {
        let kind = PolicyKind::parse(policy).ok_or_else(|| Failure::Validation(format!("unknown scripted policy {policy:?}")))?;
        let probes = args.probes.clone().unwrap_or_else(|| {
            args.manifest
                .parent()
                .unwrap_or(Path::new("."))
                .join(stimulus::PROBES_FILE)
        });
        Box::new(scripted_factory(kind, &probes)?)
    } else if let Some(dir) = spec.strip_prefix("replay:") {
        Box::new(ReplayFactory { dir: dir.into() })
    } else {
        return Err(Failure::Validation(format!("unknown backend {spec:?}")));
    };
    Ok(match &args.record {
        Some(dir) => Box::new(RecordingFactory {
            inner,
            dir: dir.clone(),
        }),
        None => inner,
    })
}

fn run(args: RunArgs, verbose: bool) -> Result<(), Failure> {
    let manifest = harness::load_manifest(&args.manifest)?;
    let factory = factory(&args, verbose)?;
    let mut cfg = RunConfig::new(&args.out);
    cfg.workers = args.workers;
    cfg.overwrite = args.overwrite;
    cfg.task_filter = args.task;
    cfg.agent.max_rounds = args.max_rounds;
    cfg.agent.rescue_max_rounds = args.rescue_rounds;
    cfg.agent.settings.temperature = args.temperature;
    cfg.agent.settings.model_name = args.model.clone().unwrap_or_else(|| factory.describe());
    cfg.agent.settings.fallback_model_name = args.fallback_model.clone();
    let summary = harness::run_batch(&manifest, factory.as_ref(), &cfg)?;
    let failed = summary.results.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} samples -> {} ({} fell back after errors)",
        summary.results.len(),
        summary.results_path.display(),
        failed
    );
    if summary.results.iter().any(|r| r.correct.is_some()) {
        let report = harness::score(&summary.results, &manifest)?;
        print!("{}", report.render_table());
    }
    Ok(())
}

fn gen(out: &Path, kinds: &[String], per_kind: usize, seed: u64, size: u32, balance: bool) -> Result<(), Failure> {
    let kinds: Vec<StimulusKind> = if kinds.is_empty() {
        StimulusKind::ALL.to_vec()
    } else {
        kinds
            .iter()
            .map(|k| StimulusKind::parse(k).ok_or_else(|| Failure::Validation(format!("unknown stimulus kind {k:?}"))))
            .collect::<Result<_, _>>()?
    };
    let specs = stimulus::plan_specs(&kinds, per_kind, balance, seed, size);
    let summary = stimulus::emit_manifest(&specs, out).map_err(|e| match e {
        stimulus::StimulusError::InvalidArgs(m) => Failure::Validation(m),
        other => Failure::Runtime(other.to_string()),
    })?;
    println!(
        "{} samples ({} positive, {} negative) -> {}",
        summary.n_samples,
        summary.n_positive,
        summary.n_negative,
        summary.manifest_path.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run(args, cli.verbose),
        Command::Score { results, manifest, json } => {
            let manifest = harness::load_manifest(&manifest)?;
            let (_, records) = harness::load_results(&results)?;
            let report = harness::score(&records, &manifest)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.render_table());
                Ok(())
            }
        }
        Command::Stats { transcripts, json } => {
            let transcripts = harness::load_transcripts(&transcripts)?;
            let report = harness::tool_usage_stats(&transcripts)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.render_table());
                Ok(())
            }
        }
        Command::Sweep {
            image,
            probes,
            mut probe,
            qualities,
            json,
        } => {
            let raster = Raster::load(&image).map_err(|e| Failure::Validation(format!("{}: {e}", image.display())))?;
            if let Some(file) = probes {
                probe.extend(read_probes(&file)?);
            }
            let report = harness::compression_sweep(&raster, &probe, &qualities)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.render_table());
                Ok(())
            }
        }
        Command::Gen {
            out,
            kinds,
            per_kind,
            seed,
            size,
            balance,
        } => gen(&out, &kinds, per_kind, seed, size, balance),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = if cli.verbose { "debug" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(filter)),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
