use clap::Parser;
use finite_hilbert::cli::{run, CliArgs};

fn main() {
    std::process::exit(run(&CliArgs::parse()));
}
