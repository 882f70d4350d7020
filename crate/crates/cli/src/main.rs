fn main() {
    std::process::exit(robgasp_cli::run(std::env::args_os()));
}
