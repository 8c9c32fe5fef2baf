fn main() {
    std::process::exit(storyer::cli::main_with(std::env::args_os()));
}
