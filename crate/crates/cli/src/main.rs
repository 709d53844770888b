fn main() {
    let code = icrbar::harness::cli_main(std::env::args_os());
    std::process::exit(code);
}
