use std::process::ExitCode;

fn main() -> ExitCode {
    if let Some(n) = std::env::var("NQ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: NQ_THREADS ignored: {e}");
        }
    }
    let code = nq_core::cli::run(std::env::args_os());
    ExitCode::from(code as u8)
}
