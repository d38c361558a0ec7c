fn main() {
    std::process::exit(tremor_cli::run(std::env::args_os()));
}
