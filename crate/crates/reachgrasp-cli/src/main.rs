fn main() {
    eprintln!("reachgrasp CLI: not yet wired up");
    std::process::exit(4);
}
