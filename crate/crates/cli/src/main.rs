fn main() {
    std::process::exit(abbg_cli::run(std::env::args_os()));
}
