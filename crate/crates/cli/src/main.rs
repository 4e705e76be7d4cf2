fn main() {
    std::process::exit(sigsel_cli::run(std::env::args_os()));
}
