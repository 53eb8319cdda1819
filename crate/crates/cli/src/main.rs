fn main() {
    std::process::exit(gaussbox_cli::run(std::env::args_os()));
}
