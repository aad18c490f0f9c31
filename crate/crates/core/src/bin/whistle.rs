fn main() -> std::process::ExitCode {
    whistle::cli::main()
}
