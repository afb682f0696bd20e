fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(worldline_cli::run_command(&argv));
}
