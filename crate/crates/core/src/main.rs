fn main() {
    std::process::exit(irrfair::cli::main_with_args(std::env::args_os()));
}
