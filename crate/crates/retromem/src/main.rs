fn main() -> std::process::ExitCode {
    retromem::cli::main_with(std::env::args_os())
}
