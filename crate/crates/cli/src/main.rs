fn main() {
    std::process::exit(lattes_cli::run(std::env::args_os()));
}
