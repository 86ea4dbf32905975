fn main() {
    std::process::exit(peakshaver::cli::main_with_args(std::env::args_os()));
}
