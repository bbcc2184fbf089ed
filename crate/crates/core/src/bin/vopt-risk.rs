fn main() {
    std::process::exit(vopt_risk::cli::run());
}
