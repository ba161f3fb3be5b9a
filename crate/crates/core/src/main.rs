fn main() {
    std::process::exit(regvar::cli::run(std::env::args_os()));
}
