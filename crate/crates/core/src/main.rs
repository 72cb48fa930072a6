fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(contact_thermo::cli::run(&args));
}
