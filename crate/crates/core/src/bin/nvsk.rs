fn main() {
    std::process::exit(nvsk::cli::main_with_args(std::env::args_os()));
}
