fn main() {
    std::process::exit(purify::cli::cmd_entry(std::env::args()));
}
