use clap::Parser;
use glosten_eq::cli::{init_threads, run, Cli};

fn main() {
    init_threads();
    std::process::exit(run(Cli::parse()));
}
