fn main() {
    std::process::exit(knng_cli::run(std::env::args_os()));
}
