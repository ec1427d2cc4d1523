fn main() -> std::process::ExitCode {
    hamsynth::cli::main()
}
