fn main() {
    std::process::exit(lesionwise::cli::main());
}
