fn main() {
    std::process::exit(wenas::cli::main_with_args(std::env::args_os().collect()));
}
