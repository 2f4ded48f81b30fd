fn main() {
    std::process::exit(voisat_cli::run(std::env::args_os()));
}
