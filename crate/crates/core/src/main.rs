fn main() {
    std::process::exit(emofuse::cli::run(std::env::args_os()));
}
