fn main() {
    std::process::exit(smc_core::cli::run(std::env::args()));
}
