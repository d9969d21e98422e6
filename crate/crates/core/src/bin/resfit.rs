fn main() {
    std::process::exit(resfit::cli::run(std::env::args_os()));
}
