fn main() {
    std::process::exit(hrflow_cli::run(std::env::args_os()));
}
