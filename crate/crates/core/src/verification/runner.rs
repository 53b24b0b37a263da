//! A protocol-compatible snippet runner.
//!
//! Reads one request per line, runs the snippet with the system Python in a
//! fresh temporary directory under a wall-clock deadline and an address-space
//! limit, and writes one reply per line. Used when no dedicated runner is
//! installed, and by the test suites.

use std::io::{BufRead, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{ExecStatus, RunnerReply, RunnerRequest};

/// Interpreter override for snippets.
pub const ENV_PYTHON: &str = "MATHCODE_PYTHON";

fn interpreter() -> String {
    std::env::var(ENV_PYTHON).unwrap_or_else(|_| "python3".to_string())
}

/// Cap `bytes` at `cap`, appending a marker when anything was cut.
pub fn cap_output(bytes: &[u8], total: usize, cap: usize) -> String {
    if total <= cap {
        return String::from_utf8_lossy(bytes).into_owned();
    }
    let mut text = String::from_utf8_lossy(&bytes[..cap.min(bytes.len())]).into_owned();
    // a cut through a multi-byte char leaves a replacement char at the end
    if text.ends_with('\u{FFFD}') {
        text.pop();
    }
    text.push_str(&format!("\n[output truncated at {cap} bytes]"));
    text
}

/// Drain a pipe, keeping the first `cap` bytes and counting the rest.
fn drain(mut pipe: impl Read + Send + 'static, cap: usize) -> std::thread::JoinHandle<(Vec<u8>, usize)> {
    std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut total = 0usize;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    total += n;
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, total)
    })
}

/// Execute one request. Errors are failures of the runner itself, never of
/// the snippet.
pub fn run_once(req: &RunnerRequest) -> std::io::Result<RunnerReply> {
    let dir = tempfile::Builder::new().prefix("snippet-").tempdir()?;
    let script = dir.path().join("snippet.py");
    std::fs::write(&script, &req.code)?;

    let mem_bytes = req.memory_limit_mb.saturating_mul(1024 * 1024);
    let mut cmd = Command::new(interpreter());
    cmd.arg(&script)
        .current_dir(dir.path())
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("HOME", dir.path())
        .env("TMPDIR", dir.path())
        .env("LANG", "C.UTF-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONHASHSEED", "0")
        .env("OMP_NUM_THREADS", "1")
        .env("OPENBLAS_NUM_THREADS", "1")
        .env("MKL_NUM_THREADS", "1")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: only async-signal-safe calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            let lim = libc::rlimit {
                rlim_cur: mem_bytes as libc::rlim_t,
                rlim_max: mem_bytes as libc::rlim_t,
            };
            if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as i32;
    let out = drain(child.stdout.take().expect("piped"), req.stdout_cap);
    let err = drain(child.stderr.take().expect("piped"), req.stdout_cap);

    let deadline = Duration::from_secs_f64(req.time_limit_s);
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= deadline {
            timed_out = true;
            // SAFETY: plain syscall on the child's own process group.
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
            break child.wait()?;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let wall_time_ms = started.elapsed().as_millis() as u64;
    // stray grandchildren could hold the pipes open
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
    let (out_bytes, out_total) = out.join().expect("stdout reader");
    let (err_bytes, err_total) = err.join().expect("stderr reader");
    let stdout = cap_output(&out_bytes, out_total, req.stdout_cap);
    // tracebacks name the throwaway directory; keep replies reproducible
    let stderr = cap_output(&err_bytes, err_total, req.stdout_cap).replace(&*dir.path().to_string_lossy(), "<sandbox>");

    let status = if timed_out {
        ExecStatus::Timeout
    } else if status.success() {
        ExecStatus::Ok
    } else if stderr.contains("MemoryError")
        || stderr.contains("Cannot allocate memory")
        || stderr.contains("std::bad_alloc")
        || status.signal() == Some(libc::SIGSEGV)
        || status.signal() == Some(libc::SIGKILL)
    {
        ExecStatus::ResourceExceeded
    } else {
        ExecStatus::RuntimeError
    };
    Ok(RunnerReply {
        status,
        stdout,
        stderr,
        wall_time_ms,
    })
}

/// Serve the protocol until `input` closes. Returns an error (and the
/// process should exit non-zero) on a malformed request or a runner fault.
pub fn serve(input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: RunnerRequest = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad request: {e}")))?;
        req.validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let reply = run_once(&req)?;
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
