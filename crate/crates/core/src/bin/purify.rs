use std::io::Write;
use std::process::ExitCode;

use purify::cli::execute;
use purify::config::{parse_config, worker_count, ConfigError};

fn main() -> ExitCode {
    let cfg = match parse_config(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(ConfigError::Display(text)) => {
            print!("{text}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let workers = match worker_count() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };

    let mut buf = Vec::new();
    let result = pool.install(|| execute(&cfg, &mut buf));
    let mut out = std::io::stdout().lock();
    if out.write_all(&buf).and_then(|_| out.flush()).is_err() {
        return ExitCode::from(2);
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
