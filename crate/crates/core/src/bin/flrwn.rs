fn main() {
    std::process::exit(flrwn::cli::main_with_args(std::env::args_os()));
}
