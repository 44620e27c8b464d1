fn main() {
    std::process::exit(nmt_coverage::cli::run(std::env::args_os()));
}
