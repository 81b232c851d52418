use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cranscope::cli::run(std::env::args_os()))
}
