fn main() {
    std::process::exit(saddlekit_cli::run(std::env::args_os()));
}
