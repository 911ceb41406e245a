fn main() {
    std::process::exit(mirrordepth_cli::run(std::env::args_os()));
}
