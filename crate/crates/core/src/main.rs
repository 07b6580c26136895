use clap::Parser;
use otz_posg::cli::{init_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    init_threads();
    std::process::exit(run(cli));
}
