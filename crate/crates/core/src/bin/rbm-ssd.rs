fn main() -> std::process::ExitCode {
    ssd_rbm::cli::main()
}
