fn main() {
    std::process::exit(robustsize::cli::run(std::env::args_os()));
}
