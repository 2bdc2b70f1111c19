fn main() {
    std::process::exit(reachck::front::cli::run_cli(std::env::args_os()));
}
