fn main() {
    std::process::exit(vote_ensemble::cli::run(std::env::args_os()));
}
