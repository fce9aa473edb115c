fn main() {
    std::process::exit(asbf::cli::main_with_args(std::env::args_os()));
}
