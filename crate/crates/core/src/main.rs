fn main() {
    std::process::exit(flux_coherence::cli::run(std::env::args_os()));
}
