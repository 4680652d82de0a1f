fn main() {
    std::process::exit(porlab_cli::run(std::env::args_os()));
}
