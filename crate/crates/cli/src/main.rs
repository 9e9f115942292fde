use std::io::{ErrorKind, Write};
use std::process::ExitCode;

use anyhow::Result;
use chanmix_cli::{parse_config, run_experiment, write_atomic, Cli};
use clap::Parser;

fn run(cli: &Cli) -> Result<()> {
    let config = parse_config(cli)?;
    let (record, csv) = run_experiment(&config)?;
    let json = record.to_json()?;
    let mut files = Vec::new();
    if let Some(path) = &config.output {
        files.push((path.as_path(), json.clone()));
    }
    if let (Some(path), Some(csv)) = (&config.csv, &csv) {
        files.push((path.as_path(), csv.render()));
    }
    write_atomic(&files)?;
    if config.output.is_none() {
        // a closed pipe on the reader's side is not a failure of the run
        match writeln!(std::io::stdout().lock(), "{json}") {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = serde_json::json!({
                "error": err.to_string(),
                "causes": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
