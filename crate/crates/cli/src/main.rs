use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlstat_cli::{config::Overrides, load_dataset_file, repl, replay, CliError, Config};
use nlstat_core::fixtures::{flight_dataset, FLIGHT_ROWS, FLIGHT_SEED};

#[derive(Parser, Debug)]
#[command(name = "nlstat", about = "Natural-language statistical modelling workbench", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Serve the HTTP API.
    Serve,
    /// Interactive query loop over one dataset.
    Repl {
        dataset: PathBuf,
        /// Field delimiter, one character.
        #[arg(long)]
        delimiter: Option<char>,
    },
    /// Replay a transcript and compare routed actions with the expected ones.
    Replay {
        transcript: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
    },
    /// Write the flight fixture, its synonym map and the golden transcript.
    Fixture {
        out_dir: PathBuf,
        #[arg(long, default_value_t = FLIGHT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = FLIGHT_SEED)]
        seed: u64,
    },
}

fn delimiter_byte(d: Option<char>) -> Result<Option<u8>, CliError> {
    match d {
        None => Ok(None),
        Some(c) if c.is_ascii() => Ok(Some(c as u8)),
        Some(c) => Err(CliError::Usage(format!("delimiter {c:?} is not a single byte"))),
    }
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let config = Config::from_process(&cli.overrides)?;
    match cli.command {
        Command::Serve => {
            println!("nlstat serving on {}; {}", config.listen, config.mode_banner());
            nlstat_cli::serve(&config)?;
            Ok(0)
        }
        Command::Repl { dataset, delimiter } => {
            let data = load_dataset_file(&dataset, delimiter_byte(delimiter)?)?;
            println!("{}", config.mode_banner());
            let stdin = io::stdin();
            let mut input = stdin.lock();
            let mut out = io::stdout();
            repl::run(data, config.settings()?, &mut input as &mut dyn BufRead, &mut out as &mut dyn Write)?;
            Ok(0)
        }
        Command::Replay { transcript, dataset, delimiter } => {
            let text = std::fs::read_to_string(&transcript)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", transcript.display())))?;
            let steps = replay::parse_transcript(&text)?;
            let data = load_dataset_file(&dataset, delimiter_byte(delimiter)?)?;
            let report = replay::replay(&steps, data, config.load_synonyms()?, config.seed)?;
            report.write_to(&mut io::stdout()).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(report.exit_code())
        }
        Command::Fixture { out_dir, rows, seed } => {
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
            write_file(out_dir.join("flights.csv"), flight_dataset(rows, seed).to_csv(b',').as_bytes())?;
            write_file(out_dir.join("flight_synonyms.json"), nlstat_cli::FLIGHT_SYNONYMS_JSON.as_bytes())?;
            write_file(out_dir.join("golden_transcript.tsv"), nlstat_cli::GOLDEN_TRANSCRIPT.as_bytes())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
