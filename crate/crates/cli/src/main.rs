fn main() {
    std::process::exit(interseg_cli::main_with(std::env::args()));
}
