fn main() {
    std::process::exit(depbound_cli::dispatch(std::env::args_os()));
}
