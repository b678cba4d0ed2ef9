fn main() {
    std::process::exit(moodlyrics_cli::run(std::env::args_os()));
}
