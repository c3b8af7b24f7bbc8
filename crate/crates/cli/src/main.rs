fn main() {
    std::process::exit(rmtmean_cli::run(std::env::args().collect()));
}
