//! `srpg`: generate corpora, inject PII, guard messages, evaluate methods,
//! and serve the guard as an HTTP middleware.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use srpg_cli::config::{BackendKind, FileConfig};
use srpg_cli::gateway::{serve_blocking, GatewayState};
use srpg_core::corpus::inject::derive_item_seed;
use srpg_core::{
    evaluate_outputs, generate_synthetic, inject_pii, GuardMethod, GuardRecord, InjectedItem,
    Reconstructor, ReportEnvelope,
};

#[derive(Parser)]
#[command(name = "srpg", version, about = "Dual-stream privacy guard for tutoring messages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dialogue corpus (JSONL).
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Problem template file; bundled templates by default.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Inject synthetic PII into a dialogue corpus.
    Inject {
        #[arg(long = "in")]
        input: PathBuf,
        /// Profile file (JSON array); bundled synthetic profiles by default.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Guard every item of an injected corpus.
    Guard {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        method: GuardMethodArg,
        #[arg(long, value_enum, default_value = "deterministic")]
        backend: BackendKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score guard outputs against gold ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the guard over HTTP.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Relay fused output to this URL and include the reply.
        #[arg(long)]
        upstream: Option<String>,
    },
}

#[derive(Clone, Copy)]
struct GuardMethodArg(GuardMethod);

impl std::str::FromStr for GuardMethodArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<GuardMethod>().map(GuardMethodArg)
    }
}

/// Runtime failure (exit 1) or usage failure (exit 2).
enum CliError {
    Runtime(String),
    Usage(String),
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { seed, count, out, templates, config } => {
            if count == 0 {
                return Err(CliError::Usage("--count must be at least 1".into()));
            }
            let config = FileConfig::load(config.as_deref()).map_err(CliError::Usage)?;
            let bank = config.template_bank(templates.as_deref()).map_err(CliError::Usage)?;
            let items = generate_synthetic(seed, count, &bank).map_err(CliError::runtime)?;
            srpg_core::corpus::save_dialogues(&items, &out).map_err(CliError::runtime)?;
            println!("{}", items.len());
            Ok(())
        }
        Command::Inject { input, profiles, seed, out, config } => {
            let config = FileConfig::load(config.as_deref()).map_err(CliError::Usage)?;
            let items = srpg_core::corpus::load_dialogues(&input).map_err(CliError::runtime)?;
            let profile_list = match &profiles {
                Some(path) => srpg_core::corpus::inject::load_profiles(path)
                    .map_err(CliError::runtime)?,
                None => srpg_core::InjectionBank::bundled_profiles(),
            };
            let bank = config.injection_bank().map_err(CliError::Usage)?;
            let injected: Vec<InjectedItem> = items
                .iter()
                .map(|item| {
                    let idx = (derive_item_seed(seed.wrapping_add(1), &item.id) as usize)
                        % profile_list.len();
                    inject_pii(item, &profile_list[idx], seed, &bank)
                })
                .collect();
            srpg_core::save_corpus(&injected, &out).map_err(CliError::runtime)?;
            println!("{}", injected.len());
            Ok(())
        }
        Command::Guard { input, method, backend, config, out } => {
            let method = method.0;
            if method == GuardMethod::PureLlm && backend == BackendKind::Deterministic {
                return Err(CliError::Usage(
                    "method purellm requires --backend mock or --backend http".into(),
                ));
            }
            let config = FileConfig::load(config.as_deref()).map_err(CliError::Usage)?;
            let corpus = srpg_core::load_corpus(&input).map_err(CliError::runtime)?;
            let pipeline = config.pipeline(backend).map_err(CliError::Usage)?;

            let mut records = Vec::new();
            let mut failures: Vec<serde_json::Value> = Vec::new();
            for item in &corpus {
                match pipeline.guard(method, &item.injected_text) {
                    Ok(output) => records.push(GuardRecord {
                        id: item.id().to_string(),
                        backend: backend.label().to_string(),
                        output,
                    }),
                    Err(err) => failures.push(serde_json::json!({
                        "id": item.id(),
                        "error": err.to_string(),
                    })),
                }
            }
            write_jsonl(&records, &out)?;
            if !failures.is_empty() {
                let manifest = out.with_extension("errors.json");
                let body = serde_json::to_string_pretty(&failures).expect("serializable");
                std::fs::write(&manifest, body).map_err(CliError::runtime)?;
                return Err(CliError::Runtime(format!(
                    "{} item(s) failed closed; manifest at {}",
                    failures.len(),
                    manifest.display()
                )));
            }
            println!("{}", records.len());
            Ok(())
        }
        Command::Eval { pred, gold, out, weights, config } => {
            let config = FileConfig::load(config.as_deref()).map_err(CliError::Usage)?;
            let gold_items = srpg_core::load_corpus(&gold).map_err(CliError::runtime)?;
            let preds: Vec<GuardRecord> = read_jsonl(&pred)?;
            let weights = config.weights(weights.as_deref()).map_err(CliError::Usage)?;
            let bank = config.template_bank(None).map_err(CliError::Usage)?;
            let reconstructor = Reconstructor::new(
                config.detector().map_err(CliError::Usage)?,
                Default::default(),
            );
            let report = evaluate_outputs(&gold_items, &preds, &bank, &reconstructor, &weights)
                .map_err(CliError::runtime)?;

            println!("{}", srpg_core::MetricsReport::table_header());
            println!("{}", report.display_row());

            let envelope = ReportEnvelope::new(report.clone());
            let body = serde_json::to_string_pretty(&envelope).expect("serializable report");
            std::fs::write(&out, body).map_err(CliError::runtime)?;

            // regression tripwire: the guard method that promises zero
            // leakage must deliver it
            if report.method == GuardMethod::Srpg && report.asr > 0.0 {
                return Err(CliError::Runtime(format!(
                    "srpg ASR is {:.4}, expected 0.0000",
                    report.asr
                )));
            }
            Ok(())
        }
        Command::Serve { listen, config, upstream } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .init();
            let config = FileConfig::load(config.as_deref()).map_err(CliError::Usage)?;
            let mut gateway = config.gateway();
            if let Some(upstream) = upstream {
                gateway.upstream = Some(upstream);
            }
            let listen = listen
                .or_else(|| gateway.listen.clone())
                .ok_or_else(|| CliError::Usage("--listen HOST:PORT is required".into()))?;
            let default_method = match gateway.default_method.as_deref() {
                None => GuardMethod::Srpg,
                Some(raw) => raw
                    .parse()
                    .map_err(|e: String| CliError::Usage(format!("gateway.default_method: {e}")))?,
            };
            let backend_kind = match gateway.backend.as_deref() {
                None | Some("deterministic") => BackendKind::Deterministic,
                Some("mock") => BackendKind::Mock,
                Some("http") => BackendKind::Http,
                Some(other) => {
                    return Err(CliError::Usage(format!("gateway.backend: unknown backend {other}")))
                }
            };
            let pipeline = config.pipeline(backend_kind).map_err(CliError::Usage)?;
            let state = Arc::new(GatewayState {
                pipeline,
                default_method,
                log_raw: gateway.log_raw,
                upstream: gateway.upstream.clone(),
            });
            serve_blocking(&listen, state, &gateway).map_err(CliError::Runtime)
        }
    }
}

fn write_jsonl<T: serde::Serialize>(items: &[T], path: &PathBuf) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("failed to create {}: {e}", path.display())))?;
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| CliError::Runtime(format!("failed to write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<Vec<T>, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("failed to read {}: {e}", path.display())))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Runtime(format!("{}:{}: invalid record: {e}", path.display(), i + 1))
            })
        })
        .collect()
}
