fn main() {
    std::process::exit(primsep::cli::main());
}
