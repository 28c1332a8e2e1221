fn main() {
    std::process::exit(soliton_lab_cli::run_command(std::env::args_os()));
}
