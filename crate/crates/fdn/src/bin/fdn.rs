fn main() {
    std::process::exit(fdn::harness::cli::main_from_args(std::env::args_os()));
}
