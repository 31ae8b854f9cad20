fn main() {
    std::process::exit(wavepath::cli::main_with_args(std::env::args_os()));
}
