fn main() {
    std::process::exit(mcrelay_cli::main_with_args(std::env::args_os()));
}
