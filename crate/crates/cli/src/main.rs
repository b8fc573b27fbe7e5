fn main() {
    std::process::exit(trajekt_cli::app::main_with_args(std::env::args_os()));
}
