fn main() -> std::process::ExitCode {
    diffatlas::cli::main_with_args(std::env::args_os())
}
