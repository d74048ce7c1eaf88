fn main() {
    std::process::exit(tlnmem::cli::run(std::env::args_os()));
}
