fn main() {
    std::process::exit(homogen_cli::run(std::env::args_os()));
}
