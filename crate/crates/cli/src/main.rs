fn main() {
    let code = flicker_cli::run(std::env::args().skip(1));
    std::process::exit(code);
}
