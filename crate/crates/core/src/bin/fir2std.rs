fn main() -> std::process::ExitCode {
    fir2std::cli::main()
}
