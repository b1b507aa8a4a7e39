fn main() {
    std::process::exit(avfusion::cli::run());
}
