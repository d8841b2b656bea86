fn main() {
    std::process::exit(ipshadow::cli::main_with_args(std::env::args_os()));
}
