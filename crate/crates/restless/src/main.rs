use clap::Parser;
use restless::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.report());
        std::process::exit(e.exit_code());
    }
}
