use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(qdyn_cli::run(std::env::args_os()))
}
