fn main() {
    std::process::exit(ibs_risk::cli::run());
}
