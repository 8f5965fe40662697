use clap::Parser;
use hisd::cli::{main_entry, CliArgs};

fn main() {
    std::process::exit(main_entry(CliArgs::parse()));
}
