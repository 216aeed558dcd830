fn main() {
    std::process::exit(jam_age::cli::main());
}
