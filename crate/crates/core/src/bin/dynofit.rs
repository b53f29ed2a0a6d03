fn main() {
    std::process::exit(dynofit::harness::cli_main(std::env::args_os()));
}
