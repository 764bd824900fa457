use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dataforge::cli::run_cli(std::env::args_os()) as u8)
}
