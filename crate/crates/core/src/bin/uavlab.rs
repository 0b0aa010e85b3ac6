fn main() {
    std::process::exit(uavlab::cli::main_with_args(std::env::args_os()));
}
