fn main() {
    std::process::exit(noon_core::cli::run_cli(std::env::args_os()));
}
