use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{ExecStatus, ExecutionResult, Limits, RunnerReply, RunnerRequest};

/// Extra time the orchestrator allows a runner beyond the snippet's own
/// limit before declaring the runner hung.
pub const WATCHDOG_GRACE: Duration = Duration::from_secs(10);

/// How to start a runner process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl RunnerCommand {
    pub fn new(program: impl Into<String>) -> Self {
        RunnerCommand {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }
}

struct Live {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Live {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One runner process speaking the line protocol. The process is started
/// lazily and restarted after any protocol fault.
pub struct SandboxClient {
    command: RunnerCommand,
    live: Option<Live>,
    restarts: u32,
    grace: Duration,
}

impl SandboxClient {
    pub fn new(command: RunnerCommand) -> Self {
        SandboxClient {
            command,
            live: None,
            restarts: 0,
            grace: WATCHDOG_GRACE,
        }
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    /// Number of times the runner was (re)started.
    pub fn starts(&self) -> u32 {
        self.restarts
    }

    fn spawn(&mut self) -> std::io::Result<&mut Live> {
        if self.live.is_none() {
            let mut child = Command::new(&self.command.program)
                .args(&self.command.args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped");
            let stdout = child.stdout.take().expect("piped");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            self.restarts += 1;
            self.live = Some(Live {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.live.as_mut().unwrap())
    }

    /// Run `code` under `limits`. Every runner-side problem (spawn failure,
    /// crash, hang, malformed reply) becomes `SandboxFailure`.
    pub fn execute(&mut self, code: &str, limits: &Limits) -> ExecutionResult {
        let started = Instant::now();
        match self.round_trip(code, limits) {
            Ok(reply) => ExecutionResult {
                status: reply.status,
                stdout: reply.stdout,
                stderr: reply.stderr,
                wall_time_ms: reply.wall_time_ms,
            },
            Err(reason) => {
                log::warn!("sandbox failure: {reason}");
                self.live = None;
                ExecutionResult {
                    status: ExecStatus::SandboxFailure,
                    stdout: String::new(),
                    stderr: reason,
                    wall_time_ms: started.elapsed().as_millis() as u64,
                }
            }
        }
    }

    fn round_trip(&mut self, code: &str, limits: &Limits) -> Result<RunnerReply, String> {
        let request = RunnerRequest::new(code, limits);
        request.validate()?;
        let mut line = serde_json::to_vec(&request).map_err(|e| e.to_string())?;
        line.push(b'\n');
        let grace = self.grace;
        let live = self.spawn().map_err(|e| format!("cannot start runner: {e}"))?;
        live.stdin
            .write_all(&line)
            .and_then(|_| live.stdin.flush())
            .map_err(|e| format!("runner input closed: {e}"))?;
        let wait = Duration::from_secs_f64(limits.time_limit_s) + grace;
        let reply = match live.lines.recv_timeout(wait) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(format!("runner output unreadable: {e}")),
            Err(RecvTimeoutError::Timeout) => return Err("runner did not reply in time".into()),
            Err(RecvTimeoutError::Disconnected) => {
                let status = live.child.wait().map(|s| s.to_string()).unwrap_or_default();
                return Err(format!("runner exited without a reply ({status})"));
            }
        };
        let reply: RunnerReply = serde_json::from_str(&reply).map_err(|e| format!("malformed runner reply: {e}"))?;
        if reply.status == ExecStatus::SandboxFailure {
            return Err("runner reported sandbox_failure".into());
        }
        Ok(reply)
    }
}

/// A fixed set of runner processes shared by worker threads.
pub struct SandboxPool {
    idle: Mutex<Vec<SandboxClient>>,
    freed: Condvar,
    size: usize,
}

impl SandboxPool {
    pub fn new(command: RunnerCommand, size: usize) -> Self {
        let size = size.max(1);
        SandboxPool {
            idle: Mutex::new((0..size).map(|_| SandboxClient::new(command.clone())).collect()),
            freed: Condvar::new(),
            size,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Borrow a runner, blocking until one is free.
    pub fn execute(&self, code: &str, limits: &Limits) -> ExecutionResult {
        let mut client = {
            let mut idle = self.idle.lock().unwrap();
            loop {
                if let Some(c) = idle.pop() {
                    break c;
                }
                idle = self.freed.wait(idle).unwrap();
            }
        };
        let result = client.execute(code, limits);
        self.idle.lock().unwrap().push(client);
        self.freed.notify_one();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> RunnerCommand {
        RunnerCommand::new("sh").arg("-c").arg(script)
    }

    #[test]
    fn malformed_reply_is_sandbox_failure() {
        let mut c = SandboxClient::new(sh("read l; echo garbage; cat >/dev/null"));
        let r = c.execute("print(1)", &Limits::default());
        assert_eq!(r.status, ExecStatus::SandboxFailure);
        assert!(r.stderr.contains("malformed"), "{}", r.stderr);
    }

    #[test]
    fn crashed_runner_is_sandbox_failure_and_restarts() {
        let mut c = SandboxClient::new(sh("exit 3"));
        assert_eq!(
            c.execute("print(1)", &Limits::default()).status,
            ExecStatus::SandboxFailure
        );
        assert_eq!(
            c.execute("print(1)", &Limits::default()).status,
            ExecStatus::SandboxFailure
        );
        assert_eq!(c.starts(), 2);
    }

    #[test]
    fn missing_runner_is_sandbox_failure() {
        let mut c = SandboxClient::new(RunnerCommand::new("/nonexistent/runner"));
        let r = c.execute("print(1)", &Limits::default());
        assert_eq!(r.status, ExecStatus::SandboxFailure);
    }

    #[test]
    fn well_formed_reply_passes_through() {
        let reply = r#"{"status":"runtime_error","stdout":"","stderr":"boom","wall_time_ms":3}"#;
        let mut c = SandboxClient::new(sh(&format!("while read l; do echo '{reply}'; done")));
        for _ in 0..2 {
            let r = c.execute("print(1)", &Limits::default());
            assert_eq!(r.status, ExecStatus::RuntimeError);
            assert_eq!(r.stderr, "boom");
        }
        assert_eq!(c.starts(), 1);
    }

    #[test]
    fn hung_runner_trips_watchdog() {
        let mut c = SandboxClient::new(sh("sleep 60")).with_grace(Duration::from_millis(200));
        let limits = Limits {
            time_limit_s: 0.1,
            ..Limits::default()
        };
        let started = Instant::now();
        let r = c.execute("print(1)", &limits);
        assert_eq!(r.status, ExecStatus::SandboxFailure);
        assert!(r.stderr.contains("in time"));
        assert!(started.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn invalid_request_never_reaches_runner() {
        let mut c = SandboxClient::new(RunnerCommand::new("/nonexistent/runner"));
        let r = c.execute("   ", &Limits::default());
        assert_eq!(r.status, ExecStatus::SandboxFailure);
        assert!(r.stderr.contains("empty"));
        assert_eq!(c.starts(), 0);
    }
}
