fn main() {
    std::process::exit(entroweight::cli::run_command(std::env::args_os()));
}
