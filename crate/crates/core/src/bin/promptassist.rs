use std::io::{self, BufReader};
use std::process::ExitCode;

use clap::Parser;
use promptassist::cli::{Cli, execute};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let mut input = BufReader::new(io::stdin());
    let code = execute(cli, &mut input, &mut io::stdout(), &mut io::stderr()).await;
    ExitCode::from(code)
}
