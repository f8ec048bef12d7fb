// SPDX-License-Identifier: MIT OR Apache-2.0

use clap::Parser;
use llens_cli::app::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = execute(Cli::parse()) {
        eprintln!("{}", e.to_json());
        std::process::exit(1);
    }
}
