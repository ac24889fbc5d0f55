fn main() {
    std::process::exit(kgcd::cli::main());
}
