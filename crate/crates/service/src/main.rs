use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use bloom_core::coach::{Coach, CoachConfig};
use bloom_core::notify::{ConsoleSink, NotificationSink};
use bloom_core::prompts::{PromptError, PromptLibrary};
use bloom_core::provider::{
    LlmProvider, RetryingProvider, Script, ScriptLoadError, ScriptedProvider,
};
use bloom_core::replay::{run_replay, ReplayError, ReplayFixture};
use bloom_core::safety::bench::{
    evaluate_benchmark, load_jsonl, render_table, validate_dataset, BenchOptions, DatasetError,
};
use bloom_core::safety::{SafetyFilter, Split};
use bloom_service::app::{AppState, SystemClock};
use bloom_service::auth::{RegistryError, TokenRegistry};
use bloom_service::config::{ConfigError, ProviderConfig, ProviderKind, ServiceConfig};
use bloom_service::llm::OpenAiProvider;
use bloom_service::push::{DeviceRegistry, PushGatewaySink};
use bloom_service::server::{router, run_ticker};
use bloom_service::store::{FileStore, MemoryStore, PersistenceStore, StoreError};
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "bloom", version, about = "Physical-activity coaching service")]
struct Cli {
    /// TOML config file; BLOOM_* environment variables override it.
    #[arg(long, global = true, env = "BLOOM_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP and websocket service.
    Serve,
    /// Score the safety classifier on a labeled JSONL dataset.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluate only this split; train rows become few-shot examples.
        #[arg(long)]
        split: Option<Split>,
        /// Scripted provider responses instead of the configured live endpoint.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Also revise harmful rows and measure residual harm.
        #[arg(long)]
        revision: bool,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scripted chat session end to end and print the result.
    Replay {
        /// Fixture file; the bundled onboarding fixture when omitted.
        fixture: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Prompts(#[from] PromptError),
    #[error(transparent)]
    Script(#[from] ScriptLoadError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

fn build_provider(cfg: &ProviderConfig) -> Result<Arc<dyn LlmProvider>, CliError> {
    match cfg.kind {
        ProviderKind::Scripted => {
            let path = cfg.script.as_deref().ok_or_else(|| {
                CliError::Usage("provider kind `scripted` needs a script path".into())
            })?;
            Ok(Arc::new(ScriptedProvider::new(Script::load(path)?)))
        }
        ProviderKind::Openai => {
            let key = std::env::var(&cfg.api_key_env).ok();
            if key.is_none() {
                tracing::warn!(var = %cfg.api_key_env, "no API key in the environment");
            }
            let live = OpenAiProvider::new(
                &cfg.base_url,
                &cfg.model,
                key,
                Duration::from_secs(cfg.timeout_secs),
            )?;
            Ok(Arc::new(RetryingProvider::new(live)))
        }
    }
}

fn build_coach(cfg: &ServiceConfig) -> Result<Coach, CliError> {
    let prompts = match &cfg.prompts_dir {
        Some(dir) => PromptLibrary::with_overrides(dir)?,
        None => PromptLibrary::builtin(),
    };
    let safety = SafetyFilter::new(prompts.clone()).concurrent(true);
    Ok(Coach::new(prompts, safety, CoachConfig::default()))
}

fn serve(cfg: ServiceConfig) -> Result<(), CliError> {
    // Blocking HTTP clients must be built before the async runtime starts.
    let provider = build_provider(&cfg.provider)?;
    let devices = Arc::new(DeviceRegistry::new());
    let sink: Arc<dyn NotificationSink> = match &cfg.notifications.push_url {
        Some(url) => Arc::new(PushGatewaySink::new(url.clone(), devices.clone())?),
        None => Arc::new(ConsoleSink),
    };
    let store: Arc<dyn PersistenceStore> = match &cfg.data_dir {
        Some(dir) => Arc::new(FileStore::open(dir)?),
        None => {
            tracing::warn!("no data_dir configured; state lives in memory only");
            Arc::new(MemoryStore::new())
        }
    };
    let registry = TokenRegistry::load(&cfg.token_registry)?;
    let state = Arc::new(
        AppState::new(
            registry,
            store,
            Arc::new(build_coach(&cfg)?),
            provider,
            sink,
            Arc::new(SystemClock),
            cfg.default_timezone,
        )
        .with_devices(devices),
    );
    let restored = state.load_all()?;
    tracing::info!(users = restored, "restored stored users");

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
        tracing::info!(addr = %cfg.listen, "listening");
        tokio::spawn(run_ticker(
            state.clone(),
            Duration::from_secs(cfg.notifications.tick_secs.max(1)),
        ));
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn bench(
    cfg: ServiceConfig,
    dataset: PathBuf,
    split: Option<Split>,
    script: Option<PathBuf>,
    options: BenchOptions,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let rows = load_jsonl(&dataset)?;
    validate_dataset(&rows, false)?;
    let provider: Arc<dyn LlmProvider> = match script {
        Some(path) => Arc::new(ScriptedProvider::new(Script::load(&path)?)),
        None => build_provider(&cfg.provider)?,
    };
    let coach = build_coach(&cfg)?;
    let (filter, eval_rows) = match split {
        Some(split) if split != Split::Train => {
            let train: Vec<_> = rows
                .iter()
                .filter(|r| r.split == Split::Train)
                .cloned()
                .collect();
            let eval: Vec<_> = rows.into_iter().filter(|r| r.split == split).collect();
            (coach.safety.clone().with_few_shot(&train), eval)
        }
        Some(split) => (
            coach.safety.clone(),
            rows.into_iter().filter(|r| r.split == split).collect(),
        ),
        None => (coach.safety.clone(), rows),
    };
    if eval_rows.is_empty() {
        return Err(CliError::Usage("no rows to evaluate".into()));
    }
    let report = evaluate_benchmark(&filter, provider.as_ref(), &eval_rows, options);
    print!("{}", render_table(&report.summary));
    if let Some(m) = &report.revision_summary {
        for (category, v) in m {
            println!(
                "residual harm after revision, {category}: {:.2}% ({:.2})",
                v.mean, v.std
            );
        }
    }
    if let Some(path) = out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("reports serialize"),
        )?;
    }
    Ok(())
}

fn replay(
    cfg: ServiceConfig,
    fixture: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let fixture = match fixture {
        Some(p) => ReplayFixture::load(&p)?,
        None => ReplayFixture::onboarding(),
    };
    let output = run_replay(&fixture, &build_coach(&cfg)?)?;
    let json = output.to_json();
    match out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ServiceConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve => serve(cfg),
        Command::Bench {
            dataset,
            split,
            script,
            trials,
            concurrency,
            revision,
            out,
        } => {
            let options = BenchOptions {
                trials,
                concurrency,
                evaluate_revision: revision,
            };
            bench(cfg, dataset, split, script, options, out)
        }
        Command::Replay { fixture, out } => replay(cfg, fixture, out),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
