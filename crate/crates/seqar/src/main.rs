fn main() {
    std::process::exit(seqar::cli::run(std::env::args_os()));
}
