fn main() {
    std::process::exit(decal::cli::main_with_args(std::env::args_os()));
}
