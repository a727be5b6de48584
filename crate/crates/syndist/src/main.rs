use clap::Parser;

use syndist::cli::{self, Cli};
use syndist::Error;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = cli::run(&cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::Config(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
