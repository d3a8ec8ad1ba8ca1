mod commands;
mod error;
mod params;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use serde_json::json;

use commands::COMMANDS;
use error::CliError;
use params::{add_args, ConfigFile, Inputs};

fn cli() -> Command {
    let mut root = Command::new("ercav")
        .version(ercav::VERSION)
        .about("Erbium-cavity modeling: Purcell enhancement, transmission, spin pumping and decay fits")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key=value defaults, overridden by flags"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .global(true)
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("write the JSON report here instead of stdout"),
        );
    for def in COMMANDS {
        root = root.subcommand(add_args(Command::new(def.name).about(def.about), def.params));
    }
    root
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let def = COMMANDS.iter().find(|d| d.name == name).expect("registered subcommand");
    let config = match sub.get_one::<PathBuf>("config") {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let inputs = Inputs::resolve(def.params, sub, &config)?;
    let output = (def.run)(&inputs)?;

    let report = json!({
        "command": name,
        "version": ercav::VERSION,
        "inputs": inputs.echo(),
        "results": output.results,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(table) = &output.table {
        print!("{table}");
    }
    match sub.get_one::<PathBuf>("out") {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?,
        None if output.table.is_none() => print!("{text}"),
        None => {}
    }
    match output.failure {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ercav: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
