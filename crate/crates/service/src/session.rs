//! One analysis session: a dataset, the models fitted on it and the
//! transcript of queries and responses.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use nlstat_core::data::{load_csv, ColumnSummary, Dataset, LoadOptions};
use nlstat_core::formula::{add_term, print_formula, Family, ModelSpec, Term};
use nlstat_core::hops::{default_focus, draw_coefficients, predict_curves, HopsDrawSet, PredictedCurves};
use nlstat_core::inference::{pairwise_contrasts, slope_by_group, ModelSummary};
use nlstat_core::intent::{route, Action, LanguageModelClient, Provenance, SynonymMap, TranslationResult};
use nlstat_core::stats::{compare_models, fit, residual_diagnostics, FitControl, FittedModel};

use crate::charts::{chart_data, ChartMode, ChartPayload};
use crate::error::{ErrorBody, Result, ServiceError};
use crate::guidance::{is_affirmative, GuidanceMessage, Trigger, REJECTION};
use crate::views::{model_views, DiagnosticSummary, ModelViews};

/// Shared, read-only session configuration.
#[derive(Clone, Default)]
pub struct SessionSettings {
    pub synonyms: Arc<SynonymMap>,
    pub seed: u64,
    pub client: Option<Arc<dyn LanguageModelClient>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<TranslationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<GuidanceMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    /// Index into the model history of the model this entry produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_index: Option<usize>,
    pub timestamp_ms: u64,
}

/// The pair of entries appended for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReply {
    pub query: TranscriptEntry,
    pub response: TranscriptEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source_name: String,
    pub n_rows: usize,
    pub sha256: String,
    pub columns: Vec<ColumnSummary>,
}

/// A loaded dataset together with the exact bytes and options it came from.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: Arc<Dataset>,
    pub bytes: Arc<Vec<u8>>,
    pub options: LoadOptions,
    pub sha256: String,
}

impl LoadedDataset {
    pub fn from_bytes(bytes: Vec<u8>, options: LoadOptions) -> Result<Self> {
        let data = load_csv(&bytes, &options)?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        Ok(LoadedDataset { data: Arc::new(data), bytes: Arc::new(bytes), options, sha256 })
    }

    /// Stores an in-memory dataset as comma-separated text.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let options = LoadOptions { source_name: dataset.source_name().to_string(), ..LoadOptions::default() };
        Self::from_bytes(dataset.to_csv(b',').into_bytes(), options)
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            source_name: self.data.source_name().to_string(),
            n_rows: self.data.n_rows(),
            sha256: self.sha256.clone(),
            columns: self.data.schema(),
        }
    }
}

/// Everything needed to rebuild a session; fitted models are refitted
/// from their specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub dataset_sha256: Option<String>,
    pub load_options: Option<LoadOptions>,
    pub model_specs: Vec<ModelSpec>,
    pub transcript: Vec<TranscriptEntry>,
    pub pending_offer: Option<Action>,
    pub seed: u64,
}

pub struct Session {
    id: String,
    settings: SessionSettings,
    dataset: Option<LoadedDataset>,
    models: Vec<Arc<FittedModel>>,
    transcript: Vec<TranscriptEntry>,
    pending_offer: Option<Action>,
    cancel: Arc<AtomicBool>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Outcome of executing one action.
struct Executed {
    text: String,
    result: Option<Value>,
    guidance: Option<GuidanceMessage>,
    model_index: Option<usize>,
    offer: Option<Action>,
}

impl Executed {
    fn text(text: impl Into<String>) -> Self {
        Executed { text: text.into(), result: None, guidance: None, model_index: None, offer: None }
    }
}

impl Session {
    pub fn new(id: impl Into<String>, settings: SessionSettings) -> Self {
        Session {
            id: id.into(),
            settings,
            dataset: None,
            models: Vec::new(),
            transcript: Vec::new(),
            pending_offer: None,
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Flag that aborts the running fit when set.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        self.cancel.clone()
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed
    }

    pub fn dataset(&self) -> Option<&LoadedDataset> {
        self.dataset.as_ref()
    }

    fn data(&self) -> Result<Arc<Dataset>> {
        self.dataset.as_ref().map(|d| d.data.clone()).ok_or(ServiceError::NoDataset)
    }

    pub fn set_dataset(&mut self, dataset: LoadedDataset) -> Result<DatasetInfo> {
        if self.dataset.is_some() {
            return Err(ServiceError::BadRequest(
                "this session already has a dataset; start a new session for other data".into(),
            ));
        }
        let info = dataset.info();
        self.dataset = Some(dataset);
        Ok(info)
    }

    pub fn models(&self) -> &[Arc<FittedModel>] {
        &self.models
    }

    pub fn active_model(&self) -> Option<&Arc<FittedModel>> {
        self.models.last()
    }

    fn require_model(&self) -> Result<Arc<FittedModel>> {
        self.active_model().cloned().ok_or(ServiceError::NoModel)
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn pending_offer(&self) -> Option<&Action> {
        self.pending_offer.as_ref()
    }

    fn control(&self) -> FitControl {
        FitControl { cancel: Some(self.cancel.clone()), ..FitControl::default() }
    }

    fn push_model(&mut self, model: FittedModel) -> usize {
        self.models.push(Arc::new(model));
        self.models.len() - 1
    }

    fn fit_and_push(&mut self, spec: &ModelSpec) -> Result<(Arc<FittedModel>, usize)> {
        let model = fit(spec, &*self.data()?, &self.control())?;
        let i = self.push_model(model);
        Ok((self.models[i].clone(), i))
    }

    fn append(&mut self, mut entry: TranscriptEntry) -> TranscriptEntry {
        entry.seq = self.transcript.len();
        self.transcript.push(entry.clone());
        entry
    }

    /// Routes and executes one query, appending a query/response pair to
    /// the transcript. Engine errors become error responses.
    pub fn handle_query(&mut self, text: &str) -> Result<QueryReply> {
        let dataset = self.data()?;
        self.cancel.store(false, Ordering::Relaxed);

        let offer = self.pending_offer.take();
        let translation = match offer {
            Some(action) if is_affirmative(text) => TranslationResult {
                action,
                provenance: Provenance::RuleGrammar,
                raw_model_output: String::new(),
                confidence_note: "accepted the pending suggestion".into(),
                clarification: None,
            },
            _ => {
                let context = self.active_model().map(|m| m.spec.clone());
                route(
                    text,
                    &dataset,
                    context.as_ref(),
                    &self.settings.synonyms,
                    self.settings.client.as_deref(),
                )
            }
        };

        let query = self.append(TranscriptEntry {
            seq: 0,
            role: Role::User,
            text: text.to_string(),
            action: None,
            translation: None,
            result: None,
            guidance: None,
            error: None,
            model_index: None,
            timestamp_ms: now_ms(),
        });

        let mut response = TranscriptEntry {
            seq: 0,
            role: Role::System,
            text: String::new(),
            action: Some(translation.action.clone()),
            translation: Some(translation.clone()),
            result: None,
            guidance: None,
            error: None,
            model_index: None,
            timestamp_ms: 0,
        };
        match self.execute(&translation) {
            Ok(done) => {
                response.text = done.text;
                response.result = done.result;
                response.guidance = done.guidance;
                response.model_index = done.model_index;
                self.pending_offer = done.offer;
            }
            Err(e) => {
                response.text = format!("{}: {e}", e.class());
                response.error = Some(e.body());
            }
        }
        response.timestamp_ms = now_ms();
        let response = self.append(response);
        Ok(QueryReply { query, response })
    }

    fn execute(&mut self, translation: &TranslationResult) -> Result<Executed> {
        match &translation.action {
            Action::FitModel { spec } => self.fitted(spec, None),
            Action::ReviseModel { add, remove } => {
                let current = self.require_model()?;
                let mut spec = current.spec.clone();
                for v in remove {
                    spec = spec.without_variable(v);
                }
                for v in add {
                    spec = add_term(&spec, v)?;
                }
                self.fitted(&spec, Some(current))
            }
            Action::ChangeFamily { family } => {
                let current = self.require_model()?;
                self.fitted(&current.spec.with_family(*family), Some(current))
            }
            Action::TestPairwise { response, group } => self.test_pairwise(response, group),
            Action::TestSlopeByGroup { response, slope_var, group } => self.test_slopes(response, slope_var, group),
            Action::InspectResiduals => {
                let model = self.require_model()?;
                let views = model_views(&model)?;
                Ok(Executed {
                    text: format!("Residuals against fitted values for {}.", print_formula(&model.spec)),
                    result: Some(json!({ "kind": "residuals", "views": views })),
                    model_index: Some(self.models.len() - 1),
                    ..Executed::text("")
                })
            }
            Action::ShowHops { draws } => {
                let (set, curves) = self.hops(*draws, self.settings.seed, None)?;
                let model = self.require_model()?;
                Ok(Executed {
                    text: format!(
                        "Drew {} plausible fits of {} (seed {}), varying {}.",
                        set.len(),
                        print_formula(&model.spec),
                        set.seed,
                        curves.focus_var
                    ),
                    result: Some(json!({ "kind": "hops", "draws": set, "curves": curves })),
                    model_index: Some(self.models.len() - 1),
                    ..Executed::text("")
                })
            }
            Action::ReportResidualPattern => {
                let model = self.require_model()?;
                let diag = DiagnosticSummary::from(&residual_diagnostics(&model)?);
                let result = Some(json!({ "kind": "residual_pattern", "diagnostics": diag }));
                let skew = diag.skewness.map_or_else(|| "undefined".to_string(), |g| format!("{g:.3}"));
                if diag.skew_flag {
                    Ok(Executed {
                        text: format!("Residual skewness is {skew}."),
                        result,
                        guidance: Some(GuidanceMessage::new(Trigger::SkewDetected)),
                        offer: Some(Action::ChangeFamily { family: Family::Gamma }),
                        ..Executed::text("")
                    })
                } else {
                    Ok(Executed {
                        text: format!("Residual skewness is {skew}; no change of distribution is suggested."),
                        result,
                        ..Executed::text("")
                    })
                }
            }
            Action::Unknown => Ok(Executed {
                text: REJECTION.to_string(),
                result: Some(json!({ "kind": "rejection", "clarification": translation.clarification })),
                guidance: Some(GuidanceMessage::new(Trigger::Rejection)),
                ..Executed::text("")
            }),
        }
    }

    fn fitted(&mut self, spec: &ModelSpec, previous: Option<Arc<FittedModel>>) -> Result<Executed> {
        let (model, index) = self.fit_and_push(spec)?;
        let summary = ModelSummary::new(&model)?;
        let diagnostics = residual_diagnostics(&model).ok().map(|d| DiagnosticSummary::from(&d));
        let comparison = previous.as_ref().and_then(|p| compare_models(p, &model).ok());
        let mut text = format!(
            "Fitted {} with the {} family on {} rows.",
            summary.formula,
            model.family(),
            model.n_used()
        );
        if let (Some(p), Some(d)) = (&previous, comparison.as_ref().and_then(|c| c.delta_aic)) {
            text += &format!(" AIC changed by {d:.2} relative to {} ({}).", print_formula(&p.spec), p.family());
        }
        Ok(Executed {
            text,
            result: Some(json!({
                "kind": "model",
                "summary": summary,
                "diagnostics": diagnostics,
                "comparison": comparison,
            })),
            guidance: Some(GuidanceMessage::new(Trigger::AfterFit)),
            model_index: Some(index),
            offer: None,
        })
    }

    /// The active model when it explains `response`, else a fresh fit.
    fn model_for(&mut self, response: &str, needed: &[&str]) -> Result<(Arc<FittedModel>, Option<usize>)> {
        match self.active_model().cloned() {
            Some(m) if m.spec.response() == response => {
                let mut spec = m.spec.clone();
                for v in needed {
                    spec = add_term(&spec, v)?;
                }
                if spec == m.spec {
                    Ok((m, None))
                } else {
                    let (m, i) = self.fit_and_push(&spec)?;
                    Ok((m, Some(i)))
                }
            }
            _ => {
                let spec = ModelSpec::new(response, needed.iter().map(|v| Term::main(*v)), Family::Gaussian)?;
                let (m, i) = self.fit_and_push(&spec)?;
                Ok((m, Some(i)))
            }
        }
    }

    fn test_pairwise(&mut self, response: &str, group: &str) -> Result<Executed> {
        let (model, changed) = self.model_for(response, &[group])?;
        let table = pairwise_contrasts(&model, group)?;
        let mut text = format!(
            "Compared average {response} between all {} pairs of {group} levels (Bonferroni adjusted).",
            table.rows.len()
        );
        if changed.is_some() {
            text = format!("Model changed to {} to include {group}. {text}", print_formula(&model.spec));
        }
        Ok(Executed {
            text,
            result: Some(json!({
                "kind": "contrasts",
                "formula": print_formula(&model.spec),
                "model_changed": changed.is_some(),
                "table": table,
            })),
            model_index: Some(changed.unwrap_or(self.models.len() - 1)),
            ..Executed::text("")
        })
    }

    fn test_slopes(&mut self, response: &str, slope_var: &str, group: &str) -> Result<Executed> {
        let (base, mut changed) = self.model_for(response, &[slope_var, group])?;
        let data = self.data()?;
        let outcome = slope_by_group(&base, &data, slope_var, group, &self.control())?;
        if let Some(refit) = outcome.refit {
            changed = Some(self.push_model(refit));
        }
        let c = outcome.comparison;
        let mut text = format!("Compared the slope of {slope_var} on {response} across {group} levels.");
        if c.refitted {
            text = format!("Added the interaction of {slope_var} and {group}; the model is now {}. {text}", c.formula);
        } else if changed.is_some() {
            text = format!("Model changed to {}. {text}", c.formula);
        }
        Ok(Executed {
            text,
            result: Some(json!({ "kind": "slopes", "model_changed": changed.is_some(), "comparison": c })),
            model_index: Some(changed.unwrap_or(self.models.len() - 1)),
            ..Executed::text("")
        })
    }

    pub fn model_summary(&self) -> Result<ModelSummary> {
        Ok(ModelSummary::new(&*self.require_model()?)?)
    }

    pub fn model_views(&self) -> Result<ModelViews> {
        model_views(&*self.require_model()?)
    }

    pub fn charts(&self, variables: &[&str], mode: ChartMode) -> Result<ChartPayload> {
        chart_data(&*self.data()?, variables, mode)
    }

    pub fn hops(&self, draws: usize, seed: u64, focus: Option<&str>) -> Result<(HopsDrawSet, PredictedCurves)> {
        let model = self.require_model()?;
        let data = self.data()?;
        let set = draw_coefficients(&model, draws, seed)?;
        let focus = match focus {
            Some(f) => f.to_string(),
            None => default_focus(&model, &data).ok_or_else(|| {
                ServiceError::BadRequest("the dataset has no continuous variable to draw curves over".into())
            })?,
        };
        let curves = predict_curves(&set, &model, &data, &focus, &Default::default())?;
        Ok((set, curves))
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            id: self.id.clone(),
            dataset_sha256: self.dataset.as_ref().map(|d| d.sha256.clone()),
            load_options: self.dataset.as_ref().map(|d| d.options.clone()),
            model_specs: self.models.iter().map(|m| m.spec.clone()).collect(),
            transcript: self.transcript.clone(),
            pending_offer: self.pending_offer.clone(),
            seed: self.settings.seed,
        }
    }

    /// Rebuilds a session, refitting every stored model.
    pub fn restore(state: SessionState, dataset: Option<LoadedDataset>, settings: SessionSettings) -> Result<Self> {
        let mut s = Session::new(state.id, SessionSettings { seed: state.seed, ..settings });
        if let Some(d) = dataset {
            s.dataset = Some(d);
        }
        for spec in &state.model_specs {
            let model = fit(spec, &*s.data()?, &FitControl::default())?;
            s.push_model(model);
        }
        s.transcript = state.transcript;
        s.pending_offer = state.pending_offer;
        Ok(s)
    }
}
