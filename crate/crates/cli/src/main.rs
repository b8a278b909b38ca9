fn main() {
    std::process::exit(pirkit_cli::cli_main(std::env::args_os()));
}
