//! Command-line entry points for the nlstat workbench.

pub mod config;
pub mod error;
pub mod repl;
pub mod replay;

use std::path::Path;

use nlstat_core::data::LoadOptions;
use nlstat_service::http::{self, AppState};
use nlstat_service::session::LoadedDataset;
use nlstat_service::store::Store;

pub use config::{Config, Overrides};
pub use error::CliError;

/// Transcript of the flight-price walkthrough, replayable against the
/// bundled flight fixture.
pub const GOLDEN_TRANSCRIPT: &str = include_str!("../../../fixtures/golden_transcript.tsv");
pub const FLIGHT_SYNONYMS_JSON: &str = include_str!("../../../fixtures/flight_synonyms.json");

/// Reads a delimited file; `.tsv` files default to tab.
pub fn load_dataset_file(path: &Path, delimiter: Option<u8>) -> Result<LoadedDataset, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let is_tsv = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("tsv"));
    let options = LoadOptions {
        delimiter: delimiter.unwrap_or(if is_tsv { b'\t' } else { b',' }),
        source_name: path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        ..LoadOptions::default()
    };
    Ok(LoadedDataset::from_bytes(bytes, options)?)
}

/// Checks the data directory can be created and written.
pub fn open_store(config: &Config) -> Result<Store, CliError> {
    let store = Store::open(&config.data_dir)?;
    let probe = config.data_dir.join(".write-probe");
    std::fs::write(&probe, b"ok")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| CliError::Io(format!("data directory {} is not writable: {e}", config.data_dir.display())))?;
    Ok(store)
}

/// Runs the HTTP service until the process is stopped.
pub fn serve(config: &Config) -> Result<(), CliError> {
    let store = open_store(config)?;
    let settings = config.settings()?;
    tracing::info!("resolved configuration: {config}");
    tracing::info!("{}", config.mode_banner());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(http::serve(&config.listen, AppState::new(settings, Some(store))))
        .map_err(|e| CliError::Io(format!("cannot serve on {}: {e}", config.listen)))
}
