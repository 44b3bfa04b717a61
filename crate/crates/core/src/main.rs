fn main() {
    std::process::exit(hjmm::cli::main_with(std::env::args_os()));
}
