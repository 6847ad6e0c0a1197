fn main() {
    std::process::exit(kselect::cli::main_with_args(std::env::args_os()));
}
