fn main() {
    std::process::exit(adas_cli::run(std::env::args_os()));
}
