fn main() {
    std::process::exit(resgrad::cli::run(std::env::args_os()));
}
