//! Constrained translation through an external language model.
//!
//! The model only classifies a query into a registry task and names its
//! slots. The reply must be one JSON object `{"task_id": .., "slots": {..}}`
//! whose slots match the task exactly and whose variables name dataset
//! columns (or configured synonyms). Anything else becomes `Unknown`.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::formula::{print_formula, Family, ModelSpec, Term};

use super::mentions::{resolve_strict, SynonymMap};
use super::{Action, Provenance, TaskId, TranslationResult, DEFAULT_HOPS_DRAWS, REGISTRY};

/// Failure to obtain a reply at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    Transport(String),
    Timeout,
}

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientError::Transport(msg) => write!(f, "transport error: {msg}"),
            ClientError::Timeout => write!(f, "request timed out"),
        }
    }
}

impl std::error::Error for ClientError {}

/// A chat-style completion endpoint.
pub trait LanguageModelClient: Send + Sync {
    fn complete(&self, system_prompt: &str, query: &str) -> std::result::Result<String, ClientError>;
}

pub type LlmOutcome = std::result::Result<TranslationResult, ClientError>;

const OUTPUT_SCHEMA: &str = r#"{"task_id": "<one task id from the list>", "slots": {<the slots of that task, nothing else>}}
Slot types:
  fit_model:               {"response": column, "predictors": [column, ...], "interactions": [[column, column], ...] (optional)}
  revise_model:            {"add": [column, ...], "remove": [column, ...]}
  test_pairwise:           {"response": column, "group": categorical column}
  test_slope_by_group:     {"response": column, "slope_var": continuous column, "group": categorical column}
  inspect_residuals:       {}
  show_hops:               {"draws": positive integer (optional)}
  change_family:           {"family": "gaussian" | "gamma" | "lognormal"}
  report_residual_pattern: {}
  unknown:                 {}"#;

/// The system prompt: task registry, dataset columns, current model and
/// the required reply format.
pub fn build_system_prompt(dataset: &Dataset, context: Option<&ModelSpec>) -> String {
    let mut s = String::from(
        "You translate a data analyst's request into exactly one task from a fixed list. \
         You never compute, estimate or report numbers about the data; a separate engine does all analysis.\n\nTasks:\n",
    );
    for t in REGISTRY {
        s += &format!("- {}: {} Slots: {}\n", t.id.as_str(), t.description, t.required_slots.join(", "));
    }
    s += "- unknown: the request matches none of the tasks. Slots: none\n\nColumns:\n";
    for c in dataset.schema() {
        match c.kind {
            ColumnKind::Continuous => s += &format!("- {} (continuous)\n", c.name),
            ColumnKind::Categorical => s += &format!("- {} (categorical; levels: {})\n", c.name, c.levels.join(", ")),
        }
    }
    s += &format!(
        "\nCurrent model: {}\n",
        context.map_or_else(|| "none".to_string(), |m| format!("{} (family {})", print_formula(m), m.family()))
    );
    s += "\nReply with a single JSON object and nothing else, in this form:\n";
    s += OUTPUT_SCHEMA;
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    task_id: String,
    slots: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSlots {
    response: String,
    predictors: Vec<String>,
    #[serde(default)]
    interactions: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviseSlots {
    #[serde(default)]
    add: Vec<String>,
    #[serde(default)]
    remove: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairwiseSlots {
    response: String,
    group: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlopeSlots {
    response: String,
    slope_var: String,
    group: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HopsSlots {
    draws: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySlots {
    family: Family,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoSlots {}

fn slots<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::SchemaViolation(format!("slots: {e}")))
}

struct Resolver<'a> {
    dataset: &'a Dataset,
    synonyms: &'a SynonymMap,
}

impl Resolver<'_> {
    fn var(&self, name: &str) -> Result<String> {
        resolve_strict(name, self.dataset, self.synonyms)
    }

    fn var_of_kind(&self, name: &str, kind: ColumnKind) -> Result<String> {
        let v = self.var(name)?;
        if self.dataset.column(&v)?.kind() != kind {
            return Err(Error::Kind(format!("'{v}' is not {kind:?}").to_lowercase()));
        }
        Ok(v)
    }

    fn vars(&self, names: &[String]) -> Result<Vec<String>> {
        names.iter().map(|n| self.var(n)).collect()
    }
}

/// Validates a raw reply into an action.
pub(crate) fn parse_reply(raw: &str, dataset: &Dataset, synonyms: &SynonymMap) -> Result<Action> {
    let reply: Reply = serde_json::from_str(raw.trim())
        .map_err(|e| Error::SchemaViolation(format!("reply is not a single task object: {e}")))?;
    let r = Resolver { dataset, synonyms };
    if reply.task_id == "unknown" {
        slots::<NoSlots>(reply.slots)?;
        return Ok(Action::Unknown);
    }
    let id: TaskId = serde_json::from_value(Value::String(reply.task_id.clone()))
        .map_err(|_| Error::SchemaViolation(format!("'{}' is not a registered task", reply.task_id)))?;
    Ok(match id {
        TaskId::FitModel => {
            let s: FitSlots = slots(reply.slots)?;
            let response = r.var_of_kind(&s.response, ColumnKind::Continuous)?;
            let mut terms: Vec<Term> = r.vars(&s.predictors)?.into_iter().map(Term::main).collect();
            for group in &s.interactions {
                terms.push(Term::new(r.vars(group)?)?);
            }
            if terms.is_empty() {
                return Err(Error::SchemaViolation("fit_model needs at least one predictor".into()));
            }
            Action::FitModel { spec: ModelSpec::new(response, terms, Family::Gaussian)? }
        }
        TaskId::ReviseModel => {
            let s: ReviseSlots = slots(reply.slots)?;
            if s.add.is_empty() && s.remove.is_empty() {
                return Err(Error::SchemaViolation("revise_model needs a variable to add or remove".into()));
            }
            Action::ReviseModel { add: r.vars(&s.add)?, remove: r.vars(&s.remove)? }
        }
        TaskId::TestPairwise => {
            let s: PairwiseSlots = slots(reply.slots)?;
            Action::TestPairwise {
                response: r.var_of_kind(&s.response, ColumnKind::Continuous)?,
                group: r.var_of_kind(&s.group, ColumnKind::Categorical)?,
            }
        }
        TaskId::TestSlopeByGroup => {
            let s: SlopeSlots = slots(reply.slots)?;
            Action::TestSlopeByGroup {
                response: r.var_of_kind(&s.response, ColumnKind::Continuous)?,
                slope_var: r.var_of_kind(&s.slope_var, ColumnKind::Continuous)?,
                group: r.var_of_kind(&s.group, ColumnKind::Categorical)?,
            }
        }
        TaskId::InspectResiduals => {
            slots::<NoSlots>(reply.slots)?;
            Action::InspectResiduals
        }
        TaskId::ShowHops => {
            let s: HopsSlots = slots(reply.slots)?;
            let draws = s.draws.unwrap_or(DEFAULT_HOPS_DRAWS);
            if draws == 0 {
                return Err(Error::SchemaViolation("draws must be positive".into()));
            }
            Action::ShowHops { draws }
        }
        TaskId::ChangeFamily => Action::ChangeFamily { family: slots::<FamilySlots>(reply.slots)?.family },
        TaskId::ReportResidualPattern => {
            slots::<NoSlots>(reply.slots)?;
            Action::ReportResidualPattern
        }
    })
}

/// Asks `client` to translate `query`. A reply that fails validation gives
/// `Unknown` with the reason; only transport failures are returned as
/// errors, so the caller can fall back to the rule grammar.
pub fn llm_translate(
    client: &dyn LanguageModelClient,
    query: &str,
    dataset: &Dataset,
    context: Option<&ModelSpec>,
    synonyms: &SynonymMap,
) -> LlmOutcome {
    let raw = client.complete(&build_system_prompt(dataset, context), query)?;
    let (action, note) = match parse_reply(&raw, dataset, synonyms) {
        Ok(action) => (action, "validated client reply".to_string()),
        Err(e) => {
            log::warn!("rejected client reply ({}): {e}", e.class());
            (Action::Unknown, format!("{}: {e}", e.class()))
        }
    };
    Ok(TranslationResult {
        action,
        provenance: Provenance::LlmClient,
        raw_model_output: raw,
        confidence_note: note,
        clarification: None,
    })
}
