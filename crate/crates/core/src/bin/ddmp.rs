fn main() {
    std::process::exit(ddmp::cli::run(std::env::args_os()));
}
