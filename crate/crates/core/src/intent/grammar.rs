//! Deterministic keyword grammar used when no language-model client is
//! configured or reachable.
//!
//! Rules are tried in a fixed priority order; the first rule whose cue
//! appears decides the action. A rule that cannot fill its variable slots
//! yields [`Action::Unknown`] rather than falling through.

use crate::data::{ColumnKind, Dataset};
use crate::error::Error;
use crate::formula::{Family, ModelSpec, Term};

use super::mentions::{Lexicon, Scan, SynonymMap};
use super::{Action, TranslationResult, DEFAULT_HOPS_DRAWS};

const HYPOTHESIS_CUES: &[&str] = &[
    "hypothesis",
    "hypothesize",
    "significant",
    "significantly",
    "test whether",
    "test if",
    "differently for",
    "differently between",
    "differently across",
];
const REVISE_WORDS: &[(&str, bool)] = &[
    ("include", true),
    ("add", true),
    ("remove", false),
    ("drop", false),
    ("exclude", false),
];
const NON_RANDOM_CUES: &[&str] = &[
    "don't look random",
    "do not look random",
    "doesn't look random",
    "does not look random",
    "don't seem random",
    "do not seem random",
    "not random",
    "non-random",
    "nonrandom",
    "isn't random",
    "aren't random",
    "show a pattern",
    "shows a pattern",
];
const HOPS_CUES: &[&str] = &["hop", "hops", "variability", "hypothetical outcome", "hypothetical outcomes"];

/// Relationship cue and whether the response is named before it.
const RELATIONSHIP_CUES: &[(&str, bool)] = &[
    ("depends on", true),
    ("depend on", true),
    ("from", true),
    ("results in", false),
    ("result in", false),
    ("resulting in", false),
    ("affects", false),
    ("affect", false),
    ("predicts", false),
    ("predict", false),
];

/// Query text lowercased with curly quotes straightened and punctuation
/// other than apostrophes and hyphens turned into single spaces, padded
/// with a space on each side for whole-phrase matching.
fn normalize(query: &str) -> String {
    let lowered = query.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let spaced: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' || c == '-' { c } else { ' ' })
        .collect();
    format!(" {} ", spaced.split_whitespace().collect::<Vec<_>>().join(" "))
}

fn has(text: &str, phrase: &str) -> bool {
    text.contains(&format!(" {phrase} "))
}

fn first_cue<'a>(text: &str, cues: &[&'a str]) -> Option<&'a str> {
    cues.iter().copied().find(|c| has(text, c))
}

/// Token index at which `phrase` starts in `tokens`.
fn position(tokens: &[String], phrase: &str) -> Option<usize> {
    let words: Vec<&str> = phrase.split(' ').collect();
    tokens
        .windows(words.len())
        .position(|w| w.iter().zip(&words).all(|(a, b)| a == b))
}

struct Ctx<'a> {
    dataset: &'a Dataset,
    context: Option<&'a ModelSpec>,
    scan: Scan,
}

impl Ctx<'_> {
    fn kind(&self, var: &str) -> Option<ColumnKind> {
        self.dataset.get(var).map(|c| c.kind())
    }

    fn of_kind(&self, vars: &[String], kind: ColumnKind) -> Vec<String> {
        vars.iter().filter(|v| self.kind(v) == Some(kind)).cloned().collect()
    }
}

fn unknown(note: impl Into<String>) -> TranslationResult {
    TranslationResult::grammar(Action::Unknown, note)
}

/// Unknown with a clarification when any mention was ambiguous.
fn unresolved(ctx: &Ctx, rule: &str) -> TranslationResult {
    let mut r = unknown(format!("rule '{rule}' matched but its variables could not be resolved"));
    if let Some(e) = ctx.scan.ambiguous.first() {
        r.clarification = Some(match e {
            Error::AmbiguousMention { mention, candidates } => {
                format!("'{mention}' could refer to: {}.", candidates.join(", "))
            }
            other => other.to_string(),
        });
    }
    r
}

/// Translates a query with the keyword grammar. Pure in its arguments.
pub fn rule_grammar_parse(
    query: &str,
    dataset: &Dataset,
    context: Option<&ModelSpec>,
    synonyms: &SynonymMap,
) -> TranslationResult {
    let text = normalize(query);
    let ctx = Ctx {
        dataset,
        context,
        scan: Lexicon::new(dataset, synonyms).scan(query),
    };

    if let Some(cue) = first_cue(&text, HYPOTHESIS_CUES) {
        return hypothesis(&ctx, &text, cue);
    }
    if let Some(r) = revise(&ctx) {
        return r;
    }
    let residual = ctx.scan.tokens.iter().any(|t| t.starts_with("residual"));
    if residual {
        if let Some(cue) = first_cue(&text, NON_RANDOM_CUES) {
            return TranslationResult::grammar(
                Action::ReportResidualPattern,
                format!("residuals reported as '{cue}'"),
            );
        }
        return TranslationResult::grammar(Action::InspectResiduals, "residual request");
    }
    if let Some(cue) = first_cue(&text, HOPS_CUES) {
        let draws = ctx
            .scan
            .tokens
            .iter()
            .find_map(|t| t.parse::<usize>().ok())
            .filter(|n| *n > 0)
            .unwrap_or(DEFAULT_HOPS_DRAWS);
        return TranslationResult::grammar(Action::ShowHops { draws }, format!("HOPs cue '{cue}'"));
    }
    if let Some((family, cue)) = family_word(&text) {
        return TranslationResult::grammar(Action::ChangeFamily { family }, format!("family cue '{cue}'"));
    }
    for (cue, response_first) in RELATIONSHIP_CUES {
        if has(&text, cue) {
            return relationship(&ctx, cue, *response_first);
        }
    }
    unknown("no rule matched")
}

fn family_word(text: &str) -> Option<(Family, &'static str)> {
    const WORDS: &[(&str, Family)] = &[
        ("log-normal", Family::LogNormal),
        ("lognormal", Family::LogNormal),
        ("log normal", Family::LogNormal),
        ("skewed", Family::Gamma),
        ("skew", Family::Gamma),
        ("gamma", Family::Gamma),
        ("gaussian", Family::Gaussian),
        ("normal", Family::Gaussian),
    ];
    WORDS.iter().find(|(w, _)| has(text, w)).map(|(w, f)| (*f, *w))
}

fn hypothesis(ctx: &Ctx, text: &str, cue: &str) -> TranslationResult {
    let rule = "hypothesis";
    if !ctx.scan.ambiguous.is_empty() {
        return unresolved(ctx, rule);
    }
    let vars = ctx.scan.variables();
    let cats = ctx.of_kind(&vars, ColumnKind::Categorical);
    let conts = ctx.of_kind(&vars, ColumnKind::Continuous);
    let [group] = cats.as_slice() else {
        return unresolved(ctx, rule);
    };
    let context_response = ctx
        .context
        .map(|s| s.response().to_string())
        .filter(|r| ctx.kind(r) == Some(ColumnKind::Continuous));

    let response = match conts.len() {
        0 => context_response,
        1 => Some(conts[0].clone()),
        2 => context_response
            .filter(|r| conts.contains(r))
            .or_else(|| directional_response(ctx, &conts)),
        _ => None,
    };
    let Some(response) = response else {
        return unresolved(ctx, rule);
    };
    let others: Vec<&String> = conts.iter().filter(|c| **c != response).collect();
    let note = format!("hypothesis cue '{cue}'");
    match others.as_slice() {
        [] => TranslationResult::grammar(
            Action::TestPairwise { response, group: group.clone() },
            note,
        ),
        [slope] => TranslationResult::grammar(
            Action::TestSlopeByGroup {
                response,
                slope_var: (*slope).clone(),
                group: group.clone(),
            },
            format!("{note}{}", if has(text, "differently") { ", slope comparison" } else { "" }),
        ),
        _ => unresolved(ctx, rule),
    }
}

/// The response among `candidates` implied by a relationship cue.
fn directional_response(ctx: &Ctx, candidates: &[String]) -> Option<String> {
    for (cue, response_first) in RELATIONSHIP_CUES {
        if let Some(at) = position(&ctx.scan.tokens, cue) {
            let end = at + cue.split(' ').count();
            let side = if *response_first {
                ctx.scan.variables_in(0, at)
            } else {
                ctx.scan.variables_in(end, ctx.scan.tokens.len())
            };
            let hits: Vec<String> = side.into_iter().filter(|v| candidates.contains(v)).collect();
            return (hits.len() == 1).then(|| hits[0].clone());
        }
    }
    None
}

fn revise(ctx: &Ctx) -> Option<TranslationResult> {
    let tokens = &ctx.scan.tokens;
    let mut markers: Vec<(usize, bool)> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| REVISE_WORDS.iter().find(|(w, _)| w == t).map(|(_, add)| (i, *add)))
        .collect();
    if markers.is_empty() {
        return None;
    }
    if !ctx.scan.ambiguous.is_empty() {
        return Some(unresolved(ctx, "revise"));
    }
    markers.push((tokens.len(), true));
    let (mut add, mut remove) = (Vec::new(), Vec::new());
    for pair in markers.windows(2) {
        let (start, is_add) = pair[0];
        for v in ctx.scan.variables_in(start + 1, pair[1].0) {
            let list = if is_add { &mut add } else { &mut remove };
            if !list.contains(&v) {
                list.push(v);
            }
        }
    }
    if add.is_empty() && remove.is_empty() {
        return Some(unresolved(ctx, "revise"));
    }
    Some(TranslationResult::grammar(Action::ReviseModel { add, remove }, "revise cue"))
}

fn relationship(ctx: &Ctx, cue: &str, response_first: bool) -> TranslationResult {
    let rule = "relationship";
    if !ctx.scan.ambiguous.is_empty() {
        return unresolved(ctx, rule);
    }
    let Some(at) = position(&ctx.scan.tokens, cue) else {
        return unresolved(ctx, rule);
    };
    let end = at + cue.split(' ').count();
    let before = ctx.scan.variables_in(0, at);
    let after = ctx.scan.variables_in(end, ctx.scan.tokens.len());
    let (response_side, predictor_side) = if response_first { (before, after) } else { (after, before) };
    let [response] = response_side.as_slice() else {
        return unresolved(ctx, rule);
    };
    if ctx.kind(response) != Some(ColumnKind::Continuous) {
        return unresolved(ctx, rule);
    }
    let predictors: Vec<Term> = predictor_side
        .iter()
        .filter(|v| *v != response)
        .map(|v| Term::main(v.clone()))
        .collect();
    if predictors.is_empty() {
        return unresolved(ctx, rule);
    }
    match ModelSpec::new(response.clone(), predictors, Family::Gaussian) {
        Ok(spec) => TranslationResult::grammar(Action::FitModel { spec }, format!("relationship cue '{cue}'")),
        Err(_) => unresolved(ctx, rule),
    }
}
