//! Finding variable mentions in free text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

const MAX_PHRASE_TOKENS: usize = 4;
const MIN_SUBSTRING_LEN: usize = 4;

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "also", "among", "and", "another", "does", "each", "from", "have", "into",
    "more", "most", "much", "than", "that", "their", "them", "then", "there", "these", "they", "this",
    "those", "what", "when", "where", "whether", "which", "while", "with", "would", "your", "model",
    "variable", "variables", "between", "different", "differently", "result", "results", "affect",
    "affects", "depend", "depends", "predict", "predicts", "include", "additional", "hypothesis",
    "test", "think", "same",
];

/// User-configured phrases that name a column, e.g. "ticket price" → price.
///
/// A key may contain "(s)" to match both the singular and plural form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymMap(BTreeMap<String, String>);

impl SynonymMap {
    pub fn new() -> Self {
        SynonymMap::default()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("synonym map: {e}")))
    }

    pub fn insert(&mut self, phrase: impl Into<String>, column: impl Into<String>) {
        self.0.insert(phrase.into(), column.into());
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// (phrase, column) pairs with "(s)" expanded.
    fn expanded(&self) -> Vec<(String, &str)> {
        let mut out = Vec::new();
        for (k, v) in &self.0 {
            if k.contains("(s)") {
                out.push((k.replace("(s)", ""), v.as_str()));
                out.push((k.replace("(s)", "s"), v.as_str()));
            } else {
                out.push((k.clone(), v.as_str()));
            }
        }
        out
    }
}

/// Lowercases and splits on anything that is not a letter, digit or '_'
/// ('_' is then treated as a space).
pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['_', '-'], " ")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Crude singular form, applied identically to queries and names.
pub(crate) fn singular(token: &str) -> String {
    let n = token.chars().count();
    if n > 4 && token.ends_with("ies") {
        format!("{}y", &token[..token.len() - 3])
    } else if n > 3 && token.ends_with('s') && !token.ends_with("ss") && !token.ends_with("us") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

fn key(text: &str) -> Vec<String> {
    tokens(text).iter().map(|t| singular(t)).collect()
}

/// Resolution tiers, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tier {
    Column,
    Synonym,
    Level,
}

/// A variable mention found in a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub variable: String,
    /// Token range in the query.
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Outcome of scanning a query for variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
    pub ambiguous: Vec<Error>,
}

impl Scan {
    /// Distinct variables in order of first mention.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.mentions
            .iter()
            .filter(|m| seen.insert(m.variable.clone()))
            .map(|m| m.variable.clone())
            .collect()
    }

    /// Distinct variables mentioned inside the token range.
    pub fn variables_in(&self, start: usize, end: usize) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.mentions
            .iter()
            .filter(|m| m.start >= start && m.end <= end)
            .filter(|m| seen.insert(m.variable.clone()))
            .map(|m| m.variable.clone())
            .collect()
    }
}

/// Phrase dictionary built from a dataset schema and a synonym map.
pub struct Lexicon {
    phrases: BTreeMap<Vec<String>, BTreeMap<Tier, BTreeSet<String>>>,
    columns: Vec<String>,
}

impl Lexicon {
    pub fn new(dataset: &Dataset, synonyms: &SynonymMap) -> Self {
        let mut lex = Lexicon {
            phrases: BTreeMap::new(),
            columns: dataset.column_names().map(str::to_string).collect(),
        };
        for col in dataset.columns() {
            lex.add(key(col.name()), Tier::Column, col.name());
            if col.kind() == ColumnKind::Categorical {
                for level in col.levels() {
                    if level.trim().parse::<f64>().is_err() {
                        lex.add(key(level), Tier::Level, col.name());
                    }
                }
            }
        }
        for (phrase, target) in synonyms.expanded() {
            if dataset.get(target).is_some() {
                lex.add(key(&phrase), Tier::Synonym, target);
            }
        }
        lex
    }

    fn add(&mut self, phrase: Vec<String>, tier: Tier, column: &str) {
        if phrase.is_empty() || phrase.len() > MAX_PHRASE_TOKENS {
            return;
        }
        self.phrases
            .entry(phrase)
            .or_default()
            .entry(tier)
            .or_default()
            .insert(column.to_string());
    }

    fn lookup(&self, phrase: &[String]) -> Option<std::result::Result<String, Vec<String>>> {
        let tiers = self.phrases.get(phrase)?;
        let (_, best) = tiers.iter().next()?;
        Some(if best.len() == 1 {
            Ok(best.iter().next().cloned().unwrap_or_default())
        } else {
            Err(best.iter().cloned().collect())
        })
    }

    fn substring_match(&self, token: &str) -> Option<std::result::Result<String, Vec<String>>> {
        if token.chars().count() < MIN_SUBSTRING_LEN || STOPWORDS.contains(&token) {
            return None;
        }
        let hits: Vec<String> = self
            .columns
            .iter()
            .filter(|c| c.to_lowercase().contains(token))
            .cloned()
            .collect();
        match hits.len() {
            0 => None,
            1 => Some(Ok(hits[0].clone())),
            _ => Some(Err(hits)),
        }
    }

    /// Longest-phrase-first scan over the query tokens.
    pub fn scan(&self, query: &str) -> Scan {
        let raw = tokens(query);
        let keys: Vec<String> = raw.iter().map(|t| singular(t)).collect();
        let mut mentions = Vec::new();
        let mut ambiguous = Vec::new();
        let mut i = 0;
        'outer: while i < keys.len() {
            for len in (1..=MAX_PHRASE_TOKENS.min(keys.len() - i)).rev() {
                let hit = self.lookup(&keys[i..i + len]).or_else(|| {
                    // single tokens may also match as a unique substring of a name
                    (len == 1).then(|| self.substring_match(&raw[i])).flatten()
                });
                if let Some(hit) = hit {
                    let text = raw[i..i + len].join(" ");
                    match hit {
                        Ok(variable) => mentions.push(Mention { variable, start: i, end: i + len, text }),
                        Err(candidates) => ambiguous.push(Error::AmbiguousMention { mention: text, candidates }),
                    }
                    i += len;
                    continue 'outer;
                }
            }
            i += 1;
        }
        Scan {
            tokens: raw,
            mentions,
            ambiguous,
        }
    }
}

/// Resolves one mention to a column: exact name (case-insensitive, '_' as
/// space, plural folded), then synonym, then unique substring.
pub fn resolve_variable(mention: &str, dataset: &Dataset, synonyms: &SynonymMap) -> Result<String> {
    let want = key(mention);
    if want.is_empty() {
        return Err(Error::UnresolvedMention(mention.to_string()));
    }
    let pick = |hits: Vec<String>| -> Option<Result<String>> {
        match hits.len() {
            0 => None,
            1 => Some(Ok(hits[0].clone())),
            _ => Some(Err(Error::AmbiguousMention {
                mention: mention.to_string(),
                candidates: hits,
            })),
        }
    };
    let exact: Vec<String> = dataset
        .column_names()
        .filter(|c| key(c) == want)
        .map(str::to_string)
        .collect();
    if let Some(r) = pick(exact) {
        return r;
    }
    let syn: BTreeSet<String> = synonyms
        .expanded()
        .into_iter()
        .filter(|(p, target)| key(p) == want && dataset.get(target).is_some())
        .map(|(_, t)| t.to_string())
        .collect();
    if let Some(r) = pick(syn.into_iter().collect()) {
        return r;
    }
    let needle = mention.trim().to_lowercase();
    let sub: Vec<String> = dataset
        .column_names()
        .filter(|c| c.to_lowercase().contains(&needle))
        .map(str::to_string)
        .collect();
    pick(sub).unwrap_or_else(|| Err(Error::UnresolvedMention(mention.to_string())))
}

/// Exact column name or synonym only; used for language-model replies.
pub(crate) fn resolve_strict(name: &str, dataset: &Dataset, synonyms: &SynonymMap) -> Result<String> {
    if let Some(c) = dataset.column_names().find(|c| c.eq_ignore_ascii_case(name.trim())) {
        return Ok(c.to_string());
    }
    let want = key(name);
    let hits: BTreeSet<&str> = synonyms
        .iter()
        .filter(|(p, t)| key(p) == want && dataset.get(t).is_some())
        .map(|(_, t)| t)
        .collect();
    match hits.len() {
        1 => Ok(hits.into_iter().next().unwrap_or_default().to_string()),
        0 => Err(Error::UnknownVariable(name.to_string())),
        _ => Err(Error::AmbiguousMention {
            mention: name.to_string(),
            candidates: hits.into_iter().map(str::to_string).collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, LoadOptions};

    fn flight() -> Dataset {
        load_csv(
            b"price,duration,stops,class,days_left\n\
              120.5,2.5,0,economy,10\n610.25,3.5,1,business,21\n133.0,4.0,2,economy,3\n\
              640.75,5.5,0,business,30\n150.5,6.0,1,economy,45\n155.5,6.5,2,economy,7\n",
            &LoadOptions::default(),
        )
        .unwrap()
    }

    fn synonyms() -> SynonymMap {
        let mut s = SynonymMap::new();
        s.insert("ticket price", "price");
        s.insert("layover stop(s)", "stops");
        s.insert("how far in advance", "days_left");
        s.insert("flight duration", "duration");
        s
    }

    #[test]
    fn case_fold() {
        assert_eq!(resolve_variable("Price", &flight(), &SynonymMap::new()).unwrap(), "price");
        assert_eq!(resolve_variable("days left", &flight(), &SynonymMap::new()).unwrap(), "days_left");
        assert_eq!(resolve_variable("prices", &flight(), &SynonymMap::new()).unwrap(), "price");
    }

    #[test]
    fn synonym_tier() {
        assert_eq!(resolve_variable("layover stop", &flight(), &synonyms()).unwrap(), "stops");
        assert_eq!(resolve_variable("layover stops", &flight(), &synonyms()).unwrap(), "stops");
    }

    #[test]
    fn substring_ambiguity() {
        let ds = load_csv(b"price,pax\n1.5,2.5\n", &LoadOptions::default()).unwrap();
        assert_eq!(
            resolve_variable("p", &ds, &SynonymMap::new()).unwrap_err(),
            Error::AmbiguousMention { mention: "p".into(), candidates: vec!["price".into(), "pax".into()] }
        );
        assert_eq!(resolve_variable("pri", &ds, &SynonymMap::new()).unwrap(), "price");
        assert_eq!(
            resolve_variable("fare", &ds, &SynonymMap::new()).unwrap_err(),
            Error::UnresolvedMention("fare".into())
        );
    }

    #[test]
    fn scanner_prefers_longest_phrase() {
        let lex = Lexicon::new(&flight(), &synonyms());
        let scan = lex.scan("Ticket price depends on how far in advance I book and the number of layover stops");
        assert_eq!(scan.variables(), ["price", "days_left", "stops"]);
        assert!(scan.ambiguous.is_empty());
    }

    #[test]
    fn scanner_finds_level_labels() {
        let lex = Lexicon::new(&flight(), &synonyms());
        let scan = lex.scan("Does flight duration affect price differently for economy and business class?");
        assert_eq!(scan.variables(), ["duration", "price", "class"]);
    }

    #[test]
    fn synonyms_for_missing_columns_are_ignored() {
        let mut s = synonyms();
        s.insert("fare", "fare_usd");
        let lex = Lexicon::new(&flight(), &s);
        assert!(lex.scan("the fare").mentions.is_empty());
        assert!(resolve_strict("fare", &flight(), &s).is_err());
    }

    #[test]
    fn singular_forms() {
        assert_eq!(singular("prices"), "price");
        assert_eq!(singular("class"), "class");
        assert_eq!(singular("business"), "business");
        assert_eq!(singular("categories"), "category");
        assert_eq!(singular("bus"), "bus");
    }
}
