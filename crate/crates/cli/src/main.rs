fn main() {
    std::process::exit(iterfield_cli::run(std::env::args_os()));
}
