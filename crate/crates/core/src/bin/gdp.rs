fn main() {
    std::process::exit(genericdp::cli::run(std::env::args_os()));
}
