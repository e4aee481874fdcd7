fn main() {
    std::process::exit(steve::cli::run(std::env::args_os()));
}
