fn main() {
    std::process::exit(dyson_lab::cli::main_with_args(std::env::args_os()));
}
