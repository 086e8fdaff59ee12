fn main() {
    std::process::exit(epn::cli::run(std::env::args_os()));
}
