fn main() {
    std::process::exit(vdc_cli::run_command(std::env::args_os()));
}
