fn main() {
    std::process::exit(prooforge::cli::main());
}
