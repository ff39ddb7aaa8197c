fn main() {
    std::process::exit(otoc_lab::expcli::main_with_args(std::env::args_os()));
}
