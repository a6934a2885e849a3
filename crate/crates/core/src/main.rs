fn main() {
    std::process::exit(vieta_core::cli::main());
}
