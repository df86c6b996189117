fn main() {
    std::process::exit(coevo_trees::cli::main_with_args(std::env::args_os()));
}
