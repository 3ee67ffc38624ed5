fn main() {
    std::process::exit(cgem::cli::main_from_env());
}
