fn main() {
    std::process::exit(pdo_core::cli::cli_main(std::env::args_os()));
}
