fn main() {
    std::process::exit(tilepath::cli::run_from(std::env::args_os()));
}
