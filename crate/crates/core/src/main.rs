fn main() {
    std::process::exit(lsgan::cli::run(std::env::args_os()));
}
