fn main() {
    std::process::exit(mkc::cli::run(std::env::args_os()));
}
