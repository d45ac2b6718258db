use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use qsd_particle::cli::{run, Cli, ExperimentConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ExperimentConfig::from_command(cli.command).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            if let Some(doc) = &outcome.stdout {
                let _ = stdout.write_all(doc.as_bytes());
            }
            let _ = writeln!(stdout, "{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qsd-particle: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
