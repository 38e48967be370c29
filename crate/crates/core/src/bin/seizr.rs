fn main() {
    if let Err(err) = seizr::cli::run() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
