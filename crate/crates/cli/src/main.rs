mod commands;
mod config;
mod experiment;
mod opts;
mod report;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use config::ConfigFile;
use opts::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,vatl=info"))
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    let settings = commands::Settings::from_opts(&file.layer("global", &cli.global)?)?;
    match &cli.command {
        Command::Generate(a) => commands::generate(&file.layer("generate", a)?, &settings),
        Command::Run(a) => commands::run(&file.layer("run", a)?, &settings),
        Command::Sweep(a) => commands::sweep(&file.layer("sweep", a)?, &settings),
        Command::ScReport(a) => commands::sc_report(&file.layer("sc_report", a)?, &settings),
    }
}
