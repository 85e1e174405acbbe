fn main() {
    if let Err(e) = dsgd::cli::run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
