fn main() {
    std::process::exit(skillbasin::cli::run(std::env::args_os()));
}
