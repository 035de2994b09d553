fn main() {
    std::process::exit(pairlab_cli::run(std::env::args_os()));
}
