use std::process::ExitCode;

fn main() -> ExitCode {
    boolnet::cli::run(std::env::args_os())
}
