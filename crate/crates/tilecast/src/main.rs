use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tilecast::cli::main_entry())
}
