use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(glab_cli::run(std::env::args_os()) as u8)
}
