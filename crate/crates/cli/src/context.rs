use std::path::PathBuf;
use std::sync::OnceLock;

use anyhow::Context as _;
use mathcode_core::gateway::{Gateway, GatewayError, ResponseCache, TokenBucket};
use mathcode_core::verification::RunnerCommand;
use mathcode_core::TokenCounter;

use crate::config::{GatewayConfig, TokenConfig};
use crate::ConfigError;

/// Settings shared by every stage of one invocation.
pub struct Context {
    pub seed: u64,
    pub workers: usize,
    pub counter: TokenCounter,
    pub tokens: TokenConfig,
    pub runner: RunnerCommand,
    pub gateway_config: GatewayConfig,
    gateway: OnceLock<Gateway>,
}

impl Context {
    pub fn new(
        seed: u64,
        workers: usize,
        tokens: TokenConfig,
        runner: RunnerCommand,
        gateway_config: GatewayConfig,
    ) -> anyhow::Result<Self> {
        let counter = match &tokens.vocab {
            Some(path) => TokenCounter::bpe_from_file(path)
                .with_context(|| format!("loading token vocabulary {}", path.display()))?,
            None => TokenCounter::new(tokens.scheme, None).map_err(|e| ConfigError(e.to_string()))?,
        };
        Ok(Context {
            seed,
            workers: workers.max(1),
            counter,
            tokens,
            runner,
            gateway_config,
            gateway: OnceLock::new(),
        })
    }

    /// The completion gateway, built on first use so stages without model
    /// calls need no endpoint configured.
    pub fn gateway(&self) -> anyhow::Result<&Gateway> {
        if let Some(gw) = self.gateway.get() {
            return Ok(gw);
        }
        let cfg = &self.gateway_config;
        let mut gw = match &cfg.fixtures {
            Some(dir) => Gateway::fixtures(dir),
            None => Gateway::from_env().map_err(|e| match e {
                GatewayError::Config(msg) => anyhow::Error::new(ConfigError(msg)),
                other => other.into(),
            })?,
        };
        let model_from_env = cfg.fixtures.is_none() && std::env::var("MATHCODE_LLM_MODEL").is_ok();
        let mut request = cfg.request.clone();
        if model_from_env {
            request.model_id = gw.defaults().model_id.clone();
        }
        gw = gw.with_defaults(request).with_retry(cfg.retry);
        if let Some(rps) = cfg.requests_per_second {
            if !(rps > 0.0 && rps.is_finite()) {
                return Err(ConfigError(format!("requests_per_second must be positive, got {rps}")).into());
            }
            gw = gw.with_rate_limit(TokenBucket::new(rps, rps.ceil().max(1.0) as u32));
        }
        if let Some(dir) = &cfg.cache_dir {
            let cache = ResponseCache::new(dir).with_context(|| format!("opening cache {}", dir.display()))?;
            gw = gw.with_cache(cache);
        }
        Ok(self.gateway.get_or_init(|| gw))
    }

    pub fn backend_calls(&self) -> u64 {
        self.gateway.get().map_or(0, Gateway::backend_calls)
    }
}

/// Runner used when none is configured: this executable's hidden
/// `stub-runner` subcommand.
pub fn default_runner() -> anyhow::Result<RunnerCommand> {
    let exe: PathBuf = std::env::current_exe().context("locating the current executable")?;
    Ok(RunnerCommand::new(exe.to_string_lossy().into_owned()).arg("stub-runner"))
}

pub fn runner_from_parts(parts: &[String]) -> anyhow::Result<RunnerCommand> {
    let (program, args) = parts
        .split_first()
        .ok_or_else(|| ConfigError("runner command is empty".into()))?;
    Ok(args
        .iter()
        .fold(RunnerCommand::new(program.clone()), |c, a| c.arg(a.clone())))
}
