fn main() {
    std::process::exit(pagelens::cli::run());
}
