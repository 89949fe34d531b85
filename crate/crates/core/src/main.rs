fn main() {
    std::process::exit(bgwtilt::harness::cli::run_cli(std::env::args_os()));
}
