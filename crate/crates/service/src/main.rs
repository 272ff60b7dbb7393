fn main() {
    std::process::exit(hed_service::cli::main_with_args(std::env::args_os()));
}
