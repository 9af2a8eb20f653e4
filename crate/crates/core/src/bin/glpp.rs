fn main() {
    std::process::exit(grouploss::cli::run(std::env::args_os()));
}
