fn main() {
    std::process::exit(relunits::cli::dispatch(std::env::args_os()));
}
