fn main() {
    std::process::exit(alamp::cli::main_with_args(std::env::args_os()));
}
