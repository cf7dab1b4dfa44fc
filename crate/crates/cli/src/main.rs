fn main() {
    std::process::exit(tvqueue_cli::run_from_args(std::env::args_os()));
}
