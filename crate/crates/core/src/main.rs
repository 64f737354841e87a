fn main() {
    std::process::exit(convex_reduction::cli::run(std::env::args_os()));
}
