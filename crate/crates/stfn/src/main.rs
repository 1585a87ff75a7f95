fn main() -> std::process::ExitCode {
    stfn::cli::main()
}
