use std::process::ExitCode;

use corrkernel::cli::{main_with, LOG_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .init();
    ExitCode::from(main_with(std::env::args_os()))
}
