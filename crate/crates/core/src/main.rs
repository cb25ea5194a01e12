fn main() {
    std::process::exit(hdtrd::cli::main_with_args(std::env::args_os()));
}
