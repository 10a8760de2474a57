fn main() {
    std::process::exit(preview_regret::cli::run(std::env::args_os()));
}
