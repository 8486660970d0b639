fn main() {
    std::process::exit(vaessl::harness::cli::run(std::env::args_os()));
}
