use pbgsim::cli;

fn main() {
    std::process::exit(cli::run_from_args(std::env::args_os()));
}
