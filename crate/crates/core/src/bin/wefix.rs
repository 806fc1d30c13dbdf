fn main() {
    std::process::exit(wefix_core::cli::run_cli(std::env::args_os()));
}
