fn main() {
    std::process::exit(embedscape_server::cli::run(std::env::args_os()));
}
