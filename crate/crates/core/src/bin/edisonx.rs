fn main() {
    std::process::exit(edisonx::cli::run(std::env::args_os()));
}
