fn main() {
    std::process::exit(gssof::cli::run(std::env::args_os()));
}
