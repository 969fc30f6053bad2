fn main() {
    std::process::exit(randprod::cli::run(std::env::args_os()));
}
