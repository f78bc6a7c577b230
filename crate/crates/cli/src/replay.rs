//! Transcript replay: runs queries through an offline session and compares
//! each routed action with the expected one.
//!
//! File format: one `QUERY<TAB>EXPECTED_ACTION_JSON` per line; blank lines
//! and lines starting with `#` are ignored.

use std::io::Write;
use std::sync::Arc;

use nlstat_core::formula::Family;
use nlstat_core::intent::{Action, SynonymMap};
use nlstat_service::session::LoadedDataset;
use nlstat_service::{Session, SessionSettings};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub line: usize,
    pub query: String,
    pub expected: Action,
}

pub fn parse_transcript(text: &str) -> Result<Vec<ReplayStep>, CliError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((query, json)) = raw.split_once('\t') else {
            return Err(CliError::Usage(format!("line {line}: expected QUERY<TAB>ACTION_JSON")));
        };
        let expected: Action = serde_json::from_str(json.trim())
            .map_err(|e| CliError::Usage(format!("line {line}: invalid action JSON: {e}")))?;
        steps.push(ReplayStep { line, query: query.trim().to_string(), expected });
    }
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: ReplayStep,
    pub actual: Action,
    pub response: String,
}

impl StepOutcome {
    pub fn matched(&self) -> bool {
        self.step.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub outcomes: Vec<StepOutcome>,
    pub final_family: Option<Family>,
    pub warnings: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(StepOutcome::matched)
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn write_to(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for w in &self.warnings {
            writeln!(out, "warning: {w}")?;
        }
        for o in &self.outcomes {
            if o.matched() {
                writeln!(out, "ok    line {}: {}", o.step.line, o.step.query)?;
            } else {
                writeln!(out, "FAIL  line {}: {}", o.step.line, o.step.query)?;
                writeln!(out, "      expected: {}", serde_json::to_string(&o.step.expected).unwrap_or_default())?;
                writeln!(out, "      actual:   {}", serde_json::to_string(&o.actual).unwrap_or_default())?;
                writeln!(out, "      response: {}", o.response)?;
            }
        }
        let failed = self.outcomes.iter().filter(|o| !o.matched()).count();
        let family = self.final_family.map_or("none".to_string(), |f| f.to_string());
        writeln!(
            out,
            "{} of {} steps matched; final family {family}",
            self.outcomes.len() - failed,
            self.outcomes.len()
        )
    }
}

/// Replays `steps` against `dataset` with the rule grammar. The result is a
/// pure function of the transcript, dataset and synonyms.
pub fn replay(steps: &[ReplayStep], dataset: LoadedDataset, synonyms: SynonymMap, seed: u64) -> Result<ReplayReport, CliError> {
    let settings = SessionSettings { synonyms: Arc::new(synonyms), seed, client: None };
    let mut session = Session::new("replay", settings);
    session.set_dataset(dataset)?;
    let mut warnings = Vec::new();
    if steps.is_empty() {
        warnings.push("transcript has no steps".to_string());
    }
    let mut outcomes = Vec::with_capacity(steps.len());
    for step in steps {
        let reply = session.handle_query(&step.query)?;
        outcomes.push(StepOutcome {
            step: step.clone(),
            actual: reply.response.action.unwrap_or(Action::Unknown),
            response: reply.response.text,
        });
    }
    let final_family = session.active_model().map(|m| m.family());
    Ok(ReplayReport { outcomes, final_family, warnings })
}
