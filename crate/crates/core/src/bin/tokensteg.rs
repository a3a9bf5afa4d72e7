fn main() {
    std::process::exit(tokensteg::cli::main_with(std::env::args_os()));
}
