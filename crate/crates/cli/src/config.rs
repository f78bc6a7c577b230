//! Runtime configuration. Flags override environment variables, which
//! override the TOML config file, which overrides built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use nlstat_core::intent::{LanguageModelClient, SynonymMap};
use nlstat_service::llm_client::HttpLanguageModel;
use nlstat_service::SessionSettings;

use crate::error::CliError;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "nlstat-data";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_ENDPOINT_ENV: &str = "NLSTAT_LLM_ENDPOINT";
pub const DEFAULT_API_KEY_ENV: &str = "NLSTAT_LLM_API_KEY";

pub const ENV_CONFIG: &str = "NLSTAT_CONFIG";
pub const ENV_LISTEN: &str = "NLSTAT_LISTEN";
pub const ENV_DATA_DIR: &str = "NLSTAT_DATA_DIR";
pub const ENV_SYNONYMS: &str = "NLSTAT_SYNONYMS";
pub const ENV_SEED: &str = "NLSTAT_SEED";
pub const ENV_OFFLINE: &str = "NLSTAT_OFFLINE";

/// Contents of the optional config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub listen: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub seed: Option<u64>,
    pub offline: Option<bool>,
    /// Names of the environment variables holding the LLM endpoint and key.
    pub llm_endpoint_env: Option<String>,
    pub llm_api_key_env: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Address to bind, host:port.
    #[arg(long, global = true)]
    pub listen: Option<String>,
    /// Directory for sessions and datasets.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// JSON synonym map, phrase to column name.
    #[arg(long, global = true)]
    pub synonyms: Option<PathBuf>,
    /// Default seed for coefficient draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use the rule grammar only, even when an LLM endpoint is configured.
    #[arg(long, global = true)]
    pub offline: bool,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Config {
    pub listen: String,
    pub data_dir: PathBuf,
    pub synonyms: Option<PathBuf>,
    pub seed: u64,
    pub llm_endpoint: Option<String>,
    pub llm_api_key: Option<String>,
    pub offline: bool,
}

fn truthy(v: &str) -> bool {
    matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on")
}

impl Config {
    /// Resolves configuration from flags, an environment lookup and the
    /// config file named by `--config` or `NLSTAT_CONFIG`.
    pub fn resolve(flags: &Overrides, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let file = match flags.config.clone().or_else(|| env(ENV_CONFIG).map(PathBuf::from)) {
            Some(p) => FileConfig::load(&p)?,
            None => FileConfig::default(),
        };
        let env_seed = match env(ENV_SEED) {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| CliError::Config(format!("{ENV_SEED}={s:?}: {e}")))?,
            ),
            None => None,
        };
        let endpoint_env = file.llm_endpoint_env.as_deref().unwrap_or(DEFAULT_ENDPOINT_ENV);
        let key_env = file.llm_api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
        let nonempty = |v: Option<String>| v.filter(|s| !s.trim().is_empty());
        let llm_endpoint = nonempty(env(endpoint_env));
        let llm_api_key = nonempty(env(key_env));
        let offline = flags.offline
            || env(ENV_OFFLINE).is_some_and(|v| truthy(&v))
            || file.offline.unwrap_or(false)
            || llm_endpoint.is_none()
            || llm_api_key.is_none();
        Ok(Config {
            listen: flags.listen.clone().or_else(|| env(ENV_LISTEN)).or(file.listen).unwrap_or_else(|| DEFAULT_LISTEN.into()),
            data_dir: flags
                .data_dir
                .clone()
                .or_else(|| env(ENV_DATA_DIR).map(PathBuf::from))
                .or(file.data_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
            synonyms: flags.synonyms.clone().or_else(|| env(ENV_SYNONYMS).map(PathBuf::from)).or(file.synonyms),
            seed: flags.seed.or(env_seed).or(file.seed).unwrap_or(DEFAULT_SEED),
            llm_endpoint,
            llm_api_key,
            offline,
        })
    }

    pub fn from_process(flags: &Overrides) -> Result<Self, CliError> {
        Self::resolve(flags, &|k| std::env::var(k).ok())
    }

    pub fn load_synonyms(&self) -> Result<SynonymMap, CliError> {
        match &self.synonyms {
            None => Ok(SynonymMap::new()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read synonyms {}: {e}", p.display())))?;
                SynonymMap::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Session settings; the LLM client is attached only when online.
    pub fn settings(&self) -> Result<SessionSettings, CliError> {
        let client: Option<Arc<dyn LanguageModelClient>> = match (&self.llm_endpoint, self.offline) {
            (Some(endpoint), false) => Some(Arc::new(HttpLanguageModel::new(endpoint.clone(), self.llm_api_key.clone()))),
            _ => None,
        };
        Ok(SessionSettings { synonyms: Arc::new(self.load_synonyms()?), seed: self.seed, client })
    }

    pub fn mode_banner(&self) -> &'static str {
        if self.offline {
            "offline mode: queries are interpreted by the rule grammar only"
        } else {
            "online mode: queries go to the language model first, with the rule grammar as fallback"
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "listen={} data_dir={} synonyms={} seed={} llm_endpoint={} llm_api_key={} offline={}",
            self.listen,
            self.data_dir.display(),
            self.synonyms.as_ref().map_or("none".into(), |p| p.display().to_string()),
            self.seed,
            self.llm_endpoint.as_deref().unwrap_or("none"),
            if self.llm_api_key.is_some() { "<redacted>" } else { "none" },
            self.offline
        )
    }
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
