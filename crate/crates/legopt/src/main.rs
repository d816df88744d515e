use std::process::ExitCode;

fn main() -> ExitCode {
    legopt::cli::run()
}
