fn main() {
    std::process::exit(vesselforge::cli::run(std::env::args_os()));
}
