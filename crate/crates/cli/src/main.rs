fn main() {
    std::process::exit(lomp_cli::run(std::env::args_os()));
}
