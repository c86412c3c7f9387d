fn main() {
    std::process::exit(dcseg::cli::run());
}
