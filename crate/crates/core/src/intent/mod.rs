//! Routing free-text queries to a closed set of analysis actions.
//!
//! A configured language-model client is tried first; its reply is only
//! accepted after strict schema and variable validation. Without a client,
//! or when the client cannot be reached, a deterministic rule grammar is
//! used. Every path ends in one [`Action`] variant.

mod grammar;
mod llm;
mod mentions;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::formula::{Family, ModelSpec};

pub use grammar::rule_grammar_parse;
pub use llm::{build_system_prompt, llm_translate, ClientError, LanguageModelClient, LlmOutcome};
pub use mentions::{resolve_variable, Lexicon, Mention, Scan, SynonymMap};

pub const DEFAULT_HOPS_DRAWS: usize = crate::hops::DEFAULT_DRAWS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    FitModel,
    ReviseModel,
    TestPairwise,
    TestSlopeByGroup,
    InspectResiduals,
    ShowHops,
    ChangeFamily,
    ReportResidualPattern,
}

impl TaskId {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::FitModel => "fit_model",
            TaskId::ReviseModel => "revise_model",
            TaskId::TestPairwise => "test_pairwise",
            TaskId::TestSlopeByGroup => "test_slope_by_group",
            TaskId::InspectResiduals => "inspect_residuals",
            TaskId::ShowHops => "show_hops",
            TaskId::ChangeFamily => "change_family",
            TaskId::ReportResidualPattern => "report_residual_pattern",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TaskDescription {
    pub id: TaskId,
    pub description: &'static str,
    pub required_slots: &'static [&'static str],
}

/// The closed set of supported tasks.
pub const REGISTRY: &[TaskDescription] = &[
    TaskDescription {
        id: TaskId::FitModel,
        description: "Fit a regression of one continuous response on one or more predictors.",
        required_slots: &["response", "predictors"],
    },
    TaskDescription {
        id: TaskId::ReviseModel,
        description: "Add variables to or remove variables from the current model and refit it.",
        required_slots: &["add", "remove"],
    },
    TaskDescription {
        id: TaskId::TestPairwise,
        description: "Test differences in the average response between all pairs of levels of a categorical variable.",
        required_slots: &["response", "group"],
    },
    TaskDescription {
        id: TaskId::TestSlopeByGroup,
        description: "Test whether the slope of a continuous predictor differs between levels of a categorical variable.",
        required_slots: &["response", "slope_var", "group"],
    },
    TaskDescription {
        id: TaskId::InspectResiduals,
        description: "Show residuals of the current model against its fitted values.",
        required_slots: &[],
    },
    TaskDescription {
        id: TaskId::ShowHops,
        description: "Show hypothetical outcome draws of the current model's fitted curve.",
        required_slots: &["draws"],
    },
    TaskDescription {
        id: TaskId::ChangeFamily,
        description: "Refit the current model with a different response distribution (gaussian, gamma or lognormal).",
        required_slots: &["family"],
    },
    TaskDescription {
        id: TaskId::ReportResidualPattern,
        description: "The user reports that the residuals of the current model show a pattern.",
        required_slots: &[],
    },
];

pub fn task(id: TaskId) -> &'static TaskDescription {
    REGISTRY
        .iter()
        .find(|t| t.id == id)
        .expect("every task id has a registry entry")
}

/// A structured, executable request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    FitModel {
        spec: ModelSpec,
    },
    ReviseModel {
        #[serde(default)]
        add: Vec<String>,
        #[serde(default)]
        remove: Vec<String>,
    },
    TestPairwise {
        response: String,
        group: String,
    },
    TestSlopeByGroup {
        response: String,
        slope_var: String,
        group: String,
    },
    InspectResiduals,
    ShowHops {
        draws: usize,
    },
    ChangeFamily {
        family: Family,
    },
    ReportResidualPattern,
    Unknown,
}

impl Action {
    pub fn task_id(&self) -> Option<TaskId> {
        Some(match self {
            Action::FitModel { .. } => TaskId::FitModel,
            Action::ReviseModel { .. } => TaskId::ReviseModel,
            Action::TestPairwise { .. } => TaskId::TestPairwise,
            Action::TestSlopeByGroup { .. } => TaskId::TestSlopeByGroup,
            Action::InspectResiduals => TaskId::InspectResiduals,
            Action::ShowHops { .. } => TaskId::ShowHops,
            Action::ChangeFamily { .. } => TaskId::ChangeFamily,
            Action::ReportResidualPattern => TaskId::ReportResidualPattern,
            Action::Unknown => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LlmClient,
    RuleGrammar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub action: Action,
    pub provenance: Provenance,
    /// The client's reply verbatim; empty for the rule grammar.
    pub raw_model_output: String,
    pub confidence_note: String,
    /// Set when a mention matched several variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
}

impl TranslationResult {
    pub(crate) fn grammar(action: Action, note: impl Into<String>) -> Self {
        TranslationResult {
            action,
            provenance: Provenance::RuleGrammar,
            raw_model_output: String::new(),
            confidence_note: note.into(),
            clarification: None,
        }
    }
}

/// Translates `query` into an action, preferring `client` when given.
pub fn route(
    query: &str,
    dataset: &Dataset,
    context: Option<&ModelSpec>,
    synonyms: &SynonymMap,
    client: Option<&dyn LanguageModelClient>,
) -> TranslationResult {
    if let Some(client) = client {
        match llm_translate(client, query, dataset, context, synonyms) {
            Ok(result) => return result,
            Err(e) => {
                log::warn!("language-model client unavailable ({e}); using the rule grammar");
                let mut r = rule_grammar_parse(query, dataset, context, synonyms);
                r.confidence_note = format!("{} (client fallback: {e})", r.confidence_note);
                return r;
            }
        }
    }
    rule_grammar_parse(query, dataset, context, synonyms)
}
