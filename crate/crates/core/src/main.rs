fn main() {
    std::process::exit(ragvl::cli::run(std::env::args_os()));
}
