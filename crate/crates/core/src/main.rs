fn main() {
    std::process::exit(linksight::cli::main_with_args(std::env::args_os().collect()));
}
