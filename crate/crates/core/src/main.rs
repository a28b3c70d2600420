use clap::Parser;
use lefschetz_core::cli::{main_with, Args};

fn main() {
    std::process::exit(main_with(Args::parse()));
}
