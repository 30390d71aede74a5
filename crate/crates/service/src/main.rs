fn main() -> std::process::ExitCode {
    qrisk_service::cli::main()
}
