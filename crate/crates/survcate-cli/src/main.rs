fn main() {
    std::process::exit(survcate_cli::run());
}
