//! `mathcode`: one subcommand per curation stage, plus `run` for a whole
//! pipeline file.
//!
//! Exit status is 0 on success, 2 for invalid configuration or arguments
//! and 1 for any other failure.

mod args;
mod config;
mod context;
mod pipeline;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::Parser;
use mathcode_core::corpus::TokenScheme;
use mathcode_core::par::default_workers;

use args::{Cli, Command, GlobalArgs, Scheme};
use config::{GatewayConfig, PipelineConfig, TokenConfig};
use context::{default_runner, runner_from_parts, Context};
use stages::StageIo;

/// Bad configuration or arguments, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let global = cli.global;
    match cli.command {
        Command::StubRunner => {
            let stdin = std::io::stdin();
            mathcode_core::verification::runner::serve(stdin.lock(), std::io::stdout().lock())?;
            Ok(())
        }
        Command::Run {
            config,
            output_dir,
            force,
        } => run_config(&global, &config, output_dir, force),
        other => {
            let single = other.into_single().expect("single-stage command");
            run_single(&global, single)
        }
    }
}

fn token_config(global: &GlobalArgs, base: TokenConfig) -> Result<TokenConfig, ConfigError> {
    let scheme = match global.tokens {
        Some(Scheme::Whitespace) => TokenScheme::Whitespace,
        Some(Scheme::Bpe) => TokenScheme::Bpe,
        None => base.scheme,
    };
    let vocab = global.vocab.clone().or(base.vocab);
    if scheme == TokenScheme::Bpe && vocab.is_none() {
        return Err(ConfigError("bpe token counting needs --vocab".into()));
    }
    Ok(TokenConfig { scheme, vocab })
}

fn runner(
    global: &GlobalArgs,
    configured: Option<&[String]>,
) -> anyhow::Result<mathcode_core::verification::RunnerCommand> {
    match (&global.runner, configured) {
        (Some(cmd), _) => runner_from_parts(&cmd.split_whitespace().map(String::from).collect::<Vec<_>>()),
        (None, Some(parts)) => runner_from_parts(parts),
        (None, None) => default_runner(),
    }
}

fn apply_gateway_flags(global: &GlobalArgs, mut cfg: GatewayConfig) -> GatewayConfig {
    if global.fixtures.is_some() {
        cfg.fixtures = global.fixtures.clone();
    }
    if global.cache_dir.is_some() {
        cfg.cache_dir = global.cache_dir.clone();
    }
    if let Some(model) = &global.model {
        cfg.request.model_id = model.clone();
    }
    cfg
}

fn workers(requested: Option<usize>) -> Result<usize, ConfigError> {
    match requested {
        Some(0) => Err(ConfigError("workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(default_workers()),
    }
}

fn run_single(global: &GlobalArgs, single: args::Single) -> anyhow::Result<()> {
    let stage = single.stage;
    stage
        .validate()
        .map_err(|e| ConfigError(format!("{}: {e}", stage.kind_name())))?;
    for (raw, _) in stage.inputs() {
        if !Path::new(raw).exists() {
            return Err(ConfigError(format!("input {raw} does not exist")).into());
        }
    }
    let ctx = Context::new(
        global.seed.unwrap_or(0),
        workers(global.workers)?,
        token_config(global, TokenConfig::default())?,
        runner(global, None)?,
        apply_gateway_flags(global, GatewayConfig::default()),
    )?;
    let identity = |raw: &str| PathBuf::from(raw);
    let io = StageIo {
        resolve: &identity,
        output: single.output,
        manifests: single
            .manifests
            .into_iter()
            .map(|p| {
                let label = p
                    .file_name()
                    .map(|n| n.to_string_lossy().trim_end_matches(".manifest.json").to_string())
                    .unwrap_or_default();
                (label, p)
            })
            .collect(),
    };
    let inputs = io.input_artifacts(&stage)?;
    let manifest = pipeline::run_stage(&stage, &io, &ctx, inputs)?;
    println!(
        "{}: {} -> {} documents, {} -> {} tokens",
        stage.kind_name(),
        manifest.input_documents,
        manifest.output_documents,
        manifest.input_tokens,
        manifest.output_tokens
    );
    Ok(())
}

fn run_config(global: &GlobalArgs, path: &Path, output_dir: Option<PathBuf>, force: bool) -> anyhow::Result<()> {
    let config = PipelineConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let out_dir = match output_dir.or_else(|| config.output_dir.as_ref().map(|d| base.join(d))) {
        Some(d) => d,
        None => return Err(ConfigError("no output directory: set output_dir or pass --output-dir".into()).into()),
    };
    let mut gateway = apply_gateway_flags(global, config.gateway.clone());
    if let Some(dir) = &gateway.fixtures {
        gateway.fixtures = Some(base.join(dir));
    }
    match &gateway.cache_dir {
        Some(dir) => gateway.cache_dir = Some(base.join(dir)),
        None if gateway.fixtures.is_none() => gateway.cache_dir = Some(out_dir.join("llm-cache")),
        None => {}
    }
    let mut tokens = token_config(global, config.tokens.clone())?;
    tokens.vocab = tokens.vocab.map(|v| base.join(v));
    let ctx = Context::new(
        global.seed.unwrap_or(config.seed),
        workers(global.workers.or(config.workers))?,
        tokens,
        runner(global, config.runner.as_deref())?,
        gateway,
    )?;
    let summaries = pipeline::run_pipeline(&config, &base, &out_dir, &ctx, force)
        .with_context(|| format!("pipeline {}", path.display()))?;
    let width = summaries.iter().map(|s| s.name.len()).max().unwrap_or(0);
    for s in &summaries {
        let m = &s.manifest;
        println!(
            "{:<width$}  {:<16}  {:<7}  {} -> {} documents",
            s.name,
            s.kind,
            if s.skipped { "skipped" } else { "ran" },
            m.input_documents,
            m.output_documents
        );
    }
    if ctx.backend_calls() > 0 {
        log::info!("{} model calls", ctx.backend_calls());
    }
    Ok(())
}
