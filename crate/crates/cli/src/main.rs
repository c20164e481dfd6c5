fn main() {
    std::process::exit(lapgraph_cli::main_with(std::env::args_os()));
}
