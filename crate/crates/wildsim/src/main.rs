fn main() {
    std::process::exit(wildsim::cli::main_with(std::env::args_os()));
}
