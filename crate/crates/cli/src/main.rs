fn main() {
    std::process::exit(katoklab_cli::main_with_args(std::env::args_os()));
}
