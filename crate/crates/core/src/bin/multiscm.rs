fn main() {
    std::process::exit(multiscm::cli::main());
}
