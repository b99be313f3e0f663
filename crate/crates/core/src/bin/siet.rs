fn main() {
    std::process::exit(siet::cli::main_with_args(std::env::args_os()));
}
