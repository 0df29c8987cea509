fn main() {
    std::process::exit(delaystab_core::cli::run(std::env::args_os()));
}
