fn main() {
    std::process::exit(aepcloth_cli::run(std::env::args_os()));
}
