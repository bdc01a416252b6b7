fn main() {
    std::process::exit(otfs_cli::run(std::env::args_os()));
}
