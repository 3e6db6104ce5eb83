use std::io;
use std::process::ExitCode;

use equishoot::sim::THREADS_ENV;

fn main() -> ExitCode {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let code = equishoot_cli::main_with(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
