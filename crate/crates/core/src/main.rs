fn main() {
    std::process::exit(dnls::cli::run_cli(std::env::args()));
}
