use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(odos::cli::run(std::env::args_os()))
}
