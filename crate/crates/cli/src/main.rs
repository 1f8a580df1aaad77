fn main() {
    std::process::exit(genlearn_cli::main_with(std::env::args_os()));
}
