fn main() {
    std::process::exit(rydsim_cli::main_with_args(std::env::args_os()));
}
