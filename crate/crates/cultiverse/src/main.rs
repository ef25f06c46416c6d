use std::process::ExitCode;

fn main() -> ExitCode {
    cultiverse::cli::main()
}
