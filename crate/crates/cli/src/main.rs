fn main() {
    std::process::exit(reframe_cli::run(std::env::args_os()));
}
