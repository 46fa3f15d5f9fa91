fn main() {
    std::process::exit(sinkfrac::cli::run(std::env::args_os()));
}
