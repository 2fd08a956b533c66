fn main() {
    std::process::exit(lexnorm::cli::run(std::env::args_os()));
}
