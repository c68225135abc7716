fn main() {
    std::process::exit(hdlingam::cli::run(std::env::args_os()));
}
