//! Snippet runner speaking the sandbox line protocol on stdin/stdout.

fn main() {
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    if let Err(e) = mathcode_core::verification::runner::serve(stdin, stdout) {
        eprintln!("stub-runner: {e}");
        std::process::exit(1);
    }
}
