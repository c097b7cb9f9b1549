fn main() {
    std::process::exit(exprbench::cli::main_with_args(std::env::args_os()));
}
