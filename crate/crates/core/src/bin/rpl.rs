fn main() {
    std::process::exit(rpl::cli::main_with_args(std::env::args_os()));
}
