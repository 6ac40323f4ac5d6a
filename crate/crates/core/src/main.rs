fn main() {
    std::process::exit(peerfx::cli::main(std::env::args_os()));
}
