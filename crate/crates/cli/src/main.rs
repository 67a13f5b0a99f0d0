fn main() {
    std::process::exit(weakkam::run_from_args(std::env::args_os()));
}
