fn main() -> std::process::ExitCode {
    teleport_sim::cli::main()
}
