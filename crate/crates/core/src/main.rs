fn main() {
    std::process::exit(supplyflex::cli::main_with_args(std::env::args_os()));
}
