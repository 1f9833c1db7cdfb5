fn main() {
    std::process::exit(gibbs_holder::cli::run(std::env::args_os()));
}
