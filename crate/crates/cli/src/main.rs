fn main() {
    std::process::exit(dimerlab::run(std::env::args_os()));
}
