fn main() {
    std::process::exit(darkring_cli::run(std::env::args_os()));
}
