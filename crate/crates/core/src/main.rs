fn main() {
    std::process::exit(ifno::cli::main_with_args(std::env::args_os()));
}
