fn main() {
    std::process::exit(gasflow::cli::main());
}
