fn main() {
    std::process::exit(fdacov::cli::run(std::env::args_os()));
}
