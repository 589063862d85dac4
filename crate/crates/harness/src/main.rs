use clap::Parser;
use flexbeam_harness::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
