fn main() {
    std::process::exit(mqdyn::cli::run(std::env::args_os()));
}
