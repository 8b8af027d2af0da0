fn main() {
    std::process::exit(gzsl_ensemble::cli::run_command(std::env::args_os()));
}
