use std::env;
use std::process;

fn main() {
    process::exit(coherenza::cli::run(env::args_os()));
}
