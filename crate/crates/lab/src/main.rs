fn main() {
    std::process::exit(kelp_lab::cli::run());
}
