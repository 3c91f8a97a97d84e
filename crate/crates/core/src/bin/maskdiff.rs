fn main() {
    std::process::exit(maskdiff::cli::run(std::env::args_os()));
}
