fn main() {
    std::process::exit(firmscape::cli::main());
}
