use clap::Parser;
use serde_json::json;

use mpibeam_cli::{run, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
    };
    match run(&cli) {
        Ok(paths) => {
            let written: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "command": cli.command.name(), "written": written }));
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
    }
}
