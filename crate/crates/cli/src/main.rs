use std::process::ExitCode;

use clap::Parser;
use shortcode_cli::{
    config_from_cli, load_config, render, run, with_workers, write_output, Cli, CliError, Command, EXIT_MALFORMED,
    EXIT_UNKNOWN_COMMAND,
};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_UNKNOWN_COMMAND,
                _ => EXIT_MALFORMED,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.command {
        Command::Run(args) => load_config(&args.config)?,
        _ => config_from_cli(cli)?,
    };
    // Explicit global flags override the file.
    if matches!(cli.command, Command::Run(_)) {
        if cli.global.out != "-" {
            config.out = cli.global.out.clone();
        }
        if std::env::args().any(|a| a == "--format" || a.starts_with("--format=")) {
            config.format = cli.global.format;
        }
        if std::env::args().any(|a| a == "--seed" || a.starts_with("--seed=")) {
            config.seed = cli.global.seed;
        }
    }
    let report = with_workers(cli.global.workers, || run(&config))??;
    let bytes = render(&report, config.format)?;
    write_output(&config.out, &bytes)
}
