fn main() -> std::process::ExitCode {
    condmc::cli::main()
}
