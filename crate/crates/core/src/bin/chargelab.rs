fn main() {
    std::process::exit(chargelab::cli::run(std::env::args_os()));
}
