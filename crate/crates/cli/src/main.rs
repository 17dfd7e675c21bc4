fn main() {
    std::process::exit(lspia_cli::main_with_args(std::env::args_os()));
}
