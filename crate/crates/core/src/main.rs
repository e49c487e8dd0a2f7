fn main() {
    std::process::exit(dapo::cli::main_with_args(std::env::args_os()));
}
