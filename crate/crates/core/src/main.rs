fn main() {
    std::process::exit(spirofair::cli::main_with_args(std::env::args_os()));
}
