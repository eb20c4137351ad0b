fn main() {
    std::process::exit(snspd::cli::run(std::env::args_os()));
}
