//! Execution-based verification of extracted computations.
//!
//! Snippets run in an external runner process that speaks a line-delimited
//! JSON protocol on its stdin/stdout:
//!
//! ```text
//! -> {"code": "...", "time_limit_s": 10.0, "memory_limit_mb": 512, "stdout_cap": 65536}
//! <- {"status": "ok", "stdout": "...", "stderr": "...", "wall_time_ms": 41}
//! ```
//!
//! `status` is one of `ok`, `runtime_error`, `timeout` or
//! `resource_exceeded`. A runner that crashes, hangs past the watchdog or
//! writes anything else yields `sandbox_failure` for that snippet and is
//! restarted. [`runner::serve`] is a complete runner built on the system
//! Python.

mod compose;
mod expected;
pub mod runner;
mod sandbox;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::extraction::ExtractedComputation;
use crate::par::OrderedMap;

pub use compose::{compose_training_document, ComposeMode, ComposedDocument};
pub use expected::{
    extract_expected_values, match_output, normalize_symbolic, numbers_in, parse_number_form, Candidate, MatchKind,
    MatchOutcome, MatchPolicy,
};
pub use sandbox::{RunnerCommand, SandboxClient, SandboxPool, WATCHDOG_GRACE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
    ResourceExceeded,
    /// The runner, not the snippet, failed.
    SandboxFailure,
}

impl ExecStatus {
    pub fn name(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::ResourceExceeded => "resource_exceeded",
            ExecStatus::SandboxFailure => "sandbox_failure",
        }
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub time_limit_s: f64,
    pub memory_limit_mb: u64,
    /// Bytes kept from each output stream.
    pub stdout_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            time_limit_s: 10.0,
            memory_limit_mb: 512,
            stdout_cap: 64 * 1024,
        }
    }
}

/// One protocol request line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerRequest {
    pub code: String,
    pub time_limit_s: f64,
    pub memory_limit_mb: u64,
    pub stdout_cap: usize,
}

impl RunnerRequest {
    pub fn new(code: &str, limits: &Limits) -> Self {
        RunnerRequest {
            code: code.to_string(),
            time_limit_s: limits.time_limit_s,
            memory_limit_mb: limits.memory_limit_mb,
            stdout_cap: limits.stdout_cap,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.code.trim().is_empty() {
            return Err("snippet is empty".into());
        }
        if !(self.time_limit_s.is_finite() && self.time_limit_s > 0.0) {
            return Err(format!("time limit must be positive, got {}", self.time_limit_s));
        }
        if self.memory_limit_mb == 0 || self.stdout_cap == 0 {
            return Err("memory limit and output cap must be positive".into());
        }
        Ok(())
    }
}

/// One protocol reply line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerReply {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
}

/// What to do with a snippet that ran cleanly but whose expected result
/// holds no checkable value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnverifiablePolicy {
    #[default]
    Drop,
    RetainWithFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub computation: ExtractedComputation,
    pub execution: ExecutionResult,
    pub outcome: MatchOutcome,
    pub retained: bool,
    /// Retained under [`UnverifiablePolicy::RetainWithFlag`].
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<String>,
    /// Executions performed, counting timeout confirmation and requeues.
    pub runs: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub total: usize,
    pub retained: usize,
    pub flagged: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl VerifyReport {
    pub fn add(&mut self, v: &Verdict) {
        self.total += 1;
        if v.retained {
            self.retained += 1;
            if v.flagged {
                self.flagged += 1;
            }
        } else {
            let reason = v.drop_reason.clone().unwrap_or_else(|| "unknown".into());
            *self.dropped.entry(reason).or_default() += 1;
        }
    }

    pub fn retention_ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.retained as f64 / self.total as f64)
    }
}

/// Retention decision for an executed snippet.
pub fn decide(
    execution: &ExecutionResult,
    outcome: &MatchOutcome,
    unverifiable: UnverifiablePolicy,
) -> (bool, bool, Option<String>) {
    if execution.status != ExecStatus::Ok {
        return (false, false, Some(execution.status.name().to_string()));
    }
    match outcome.kind {
        k if k.is_match() => (true, false, None),
        MatchKind::Unverifiable => match unverifiable {
            UnverifiablePolicy::Drop => (false, false, Some("unverifiable".into())),
            UnverifiablePolicy::RetainWithFlag => (true, true, None),
        },
        _ => (false, false, Some("wrong_output".into())),
    }
}

/// Executes snippets on a runner pool and decides retention.
pub struct Verifier {
    pool: SandboxPool,
    pub limits: Limits,
    pub policy: MatchPolicy,
    pub unverifiable: UnverifiablePolicy,
    /// Extra attempts after a sandbox failure.
    pub max_requeues: u32,
}

impl Verifier {
    pub fn new(pool: SandboxPool) -> Self {
        Verifier {
            pool,
            limits: Limits::default(),
            policy: MatchPolicy::default(),
            unverifiable: UnverifiablePolicy::default(),
            max_requeues: 2,
        }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_policy(mut self, policy: MatchPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_unverifiable(mut self, unverifiable: UnverifiablePolicy) -> Self {
        self.unverifiable = unverifiable;
        self
    }

    pub fn workers(&self) -> usize {
        self.pool.size()
    }

    /// Run one snippet. A timeout is re-run once before it is final; a
    /// sandbox failure is retried up to `max_requeues` times.
    pub fn execute(&self, code: &str) -> (ExecutionResult, u32) {
        let mut runs = 0;
        let mut requeues = 0;
        let mut timeout_confirmed = false;
        loop {
            let result = self.pool.execute(code, &self.limits);
            runs += 1;
            match result.status {
                ExecStatus::SandboxFailure if requeues < self.max_requeues => requeues += 1,
                ExecStatus::Timeout if !timeout_confirmed => timeout_confirmed = true,
                _ => return (result, runs),
            }
        }
    }

    pub fn verify(&self, computation: ExtractedComputation) -> Verdict {
        let (execution, runs) = self.execute(&computation.code);
        let candidates = extract_expected_values(&computation.expected_result);
        let outcome = if candidates.is_empty() {
            match_output("", &candidates, &self.policy)
        } else if execution.status == ExecStatus::Ok {
            match_output(&execution.stdout, &candidates, &self.policy)
        } else {
            MatchOutcome {
                kind: MatchKind::None,
                detail: format!("not compared: {}", execution.status),
            }
        };
        let (retained, flagged, drop_reason) = decide(&execution, &outcome, self.unverifiable);
        Verdict {
            computation,
            execution,
            outcome,
            retained,
            flagged,
            drop_reason,
            runs,
        }
    }
}

/// Verify a stream in parallel, yielding verdicts in input order.
pub fn verify_stream<'a, I>(input: I, verifier: &'a Verifier) -> impl Iterator<Item = Verdict> + 'a
where
    I: Iterator<Item = ExtractedComputation> + 'a,
{
    let workers = verifier.workers();
    OrderedMap::new(input, workers, workers * 4, move |c| verifier.verify(c))
}

/// Collect the retained verdicts and a summary report.
pub fn verify_and_retain<I>(input: I, verifier: &Verifier) -> (Vec<Verdict>, VerifyReport)
where
    I: IntoIterator<Item = ExtractedComputation>,
{
    let mut report = VerifyReport::default();
    let mut retained = Vec::new();
    for v in verify_stream(input.into_iter(), verifier) {
        report.add(&v);
        if v.retained {
            retained.push(v);
        }
    }
    (retained, report)
}
