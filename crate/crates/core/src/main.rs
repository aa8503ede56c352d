fn main() {
    std::process::exit(sslse::cli::dispatch(std::env::args_os()));
}
