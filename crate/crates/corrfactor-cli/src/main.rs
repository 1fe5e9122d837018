fn main() {
    eprintln!("corrfactor: not yet wired up");
    std::process::exit(2);
}
