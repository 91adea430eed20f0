fn main() {
    std::process::exit(clearing_core::cli::run_from(std::env::args_os()));
}
