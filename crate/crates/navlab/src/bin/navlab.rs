fn main() {
    std::process::exit(navlab::harness::run_cli());
}
