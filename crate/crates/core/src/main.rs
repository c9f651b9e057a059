fn main() {
    std::process::exit(groundloop::cli::run(std::env::args_os()));
}
