fn main() {
    std::process::exit(hpobench::cli::cli_main(std::env::args_os()));
}
