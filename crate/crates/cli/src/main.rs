fn main() {
    std::process::exit(gravcollapse_cli::run(std::env::args_os()));
}
