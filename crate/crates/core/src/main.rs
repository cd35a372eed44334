fn main() {
    std::process::exit(adstitch::cli::run(std::env::args_os()));
}
