fn main() {
    std::process::exit(dqclab::cli::main_with(std::env::args_os()));
}
