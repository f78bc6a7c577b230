//! Model specifications and the `response ~ terms` formula language.
//!
//! Supported operators are `+` (add a term), `:` (interaction) and `*`
//! (all main effects plus every interaction among the operands). `:` binds
//! tighter than `*`. The intercept is always present; `y ~ 1` is the
//! intercept-only model. Names that are not plain identifiers may be
//! written in backticks.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{complete_cases, ColumnKind, Dataset};
use crate::error::{Error, Result};

/// One model term: a main effect (one variable) or an interaction.
/// Variables are kept sorted, which is the canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Term(Vec<String>);

impl Term {
    pub fn new<S: Into<String>>(variables: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut vars: Vec<String> = variables.into_iter().map(Into::into).collect();
        if vars.is_empty() {
            return Err(Error::FormulaSemantic("a term needs at least one variable".into()));
        }
        vars.sort();
        if let Some(w) = vars.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::FormulaSemantic(format!(
                "variable '{}' appears twice in one term",
                w[0]
            )));
        }
        Ok(Term(vars))
    }

    pub fn main(variable: impl Into<String>) -> Self {
        Term(vec![variable.into()])
    }

    pub fn variables(&self) -> &[String] {
        &self.0
    }

    pub fn is_main(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, variable: &str) -> bool {
        self.0.iter().any(|v| v == variable)
    }

    pub fn label(&self) -> String {
        self.0.join(":")
    }
}

impl Ord for Term {
    /// Lower-order terms first, then lexicographic by variable list.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<Vec<String>> for Term {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Term::new(v)
    }
}

impl From<Term> for Vec<String> {
    fn from(t: Term) -> Self {
        t.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| quote_name(v)).collect();
        f.write_str(&parts.join(":"))
    }
}

/// Response distribution and link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Normal errors, identity link.
    #[default]
    Gaussian,
    /// Gamma errors, log link.
    Gamma,
    /// Normal errors on log(response); results reported on the response scale.
    #[serde(rename = "lognormal")]
    LogNormal,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Gamma => "gamma",
            Family::LogNormal => "lognormal",
        }
    }

    pub fn link_name(self) -> &'static str {
        match self {
            Family::Gaussian => "identity",
            Family::Gamma => "log",
            Family::LogNormal => "identity (log response)",
        }
    }

    pub fn requires_positive_response(self) -> bool {
        !matches!(self, Family::Gaussian)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawSpec {
    response: String,
    #[serde(default)]
    terms: Vec<Term>,
    #[serde(default)]
    family: Family,
    #[serde(default = "yes")]
    intercept: bool,
}

fn yes() -> bool {
    true
}

/// A canonical model specification: response, sorted and de-duplicated
/// terms closed under the hierarchy rule, and a family.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ModelSpec {
    response: String,
    terms: Vec<Term>,
    family: Family,
    intercept: bool,
}

impl TryFrom<RawSpec> for ModelSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        if !raw.intercept {
            return Err(Error::FormulaSemantic(
                "models without an intercept are not supported".into(),
            ));
        }
        ModelSpec::new(raw.response, raw.terms, raw.family)
    }
}

impl ModelSpec {
    /// Canonicalizes `terms`: adds the main effects of every interaction,
    /// removes duplicates and sorts.
    pub fn new(response: impl Into<String>, terms: impl IntoIterator<Item = Term>, family: Family) -> Result<Self> {
        let response = response.into();
        if response.trim().is_empty() {
            return Err(Error::FormulaSemantic("empty response name".into()));
        }
        let mut set = BTreeSet::new();
        for t in terms {
            if t.contains(&response) {
                return Err(Error::FormulaSemantic(format!(
                    "response '{response}' also appears as a predictor"
                )));
            }
            if !t.is_main() {
                for v in t.variables() {
                    set.insert(Term::main(v.clone()));
                }
            }
            set.insert(t);
        }
        Ok(ModelSpec {
            response,
            terms: set.into_iter().collect(),
            family,
            intercept: true,
        })
    }

    pub fn intercept_only(response: impl Into<String>, family: Family) -> Result<Self> {
        Self::new(response, Vec::new(), family)
    }

    pub fn response(&self) -> &str {
        &self.response
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn with_family(&self, family: Family) -> Self {
        ModelSpec {
            family,
            ..self.clone()
        }
    }

    pub fn has_term(&self, term: &Term) -> bool {
        self.terms.binary_search(term).is_ok()
    }

    pub fn has_main(&self, variable: &str) -> bool {
        self.terms.iter().any(|t| t.is_main() && t.contains(variable))
    }

    /// Distinct predictor variables in sorted order.
    pub fn predictors(&self) -> Vec<String> {
        self.terms
            .iter()
            .flat_map(|t| t.variables().iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Response followed by the predictors.
    pub fn variables(&self) -> Vec<String> {
        let mut v = vec![self.response.clone()];
        v.extend(self.predictors());
        v
    }

    /// Returns a copy with `term` added (and canonicalized).
    pub fn with_term(&self, term: Term) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(term);
        ModelSpec::new(self.response.clone(), terms, self.family)
    }

    /// Returns a copy without any term that involves `variable`.
    pub fn without_variable(&self, variable: &str) -> Self {
        ModelSpec {
            terms: self
                .terms
                .iter()
                .filter(|t| !t.contains(variable))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_formula(self))
    }
}

fn is_plain_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' || c == '.' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

fn quote_name(name: &str) -> String {
    if is_plain_identifier(name) {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    One,
    Tilde,
    Plus,
    Colon,
    Star,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '~' => {
                tokens.push(Token::Tilde);
                chars.next();
            }
            '+' => {
                tokens.push(Token::Plus);
                chars.next();
            }
            ':' => {
                tokens.push(Token::Colon);
                chars.next();
            }
            '*' => {
                tokens.push(Token::Star);
                chars.next();
            }
            '`' => {
                chars.next();
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some((_, '`')) => break,
                        Some((_, ch)) => name.push(ch),
                        None => {
                            return Err(Error::FormulaSyntax(format!(
                                "unterminated backtick starting at offset {i}"
                            )))
                        }
                    }
                }
                if name.trim().is_empty() {
                    return Err(Error::FormulaSyntax("empty quoted name".into()));
                }
                tokens.push(Token::Name(name));
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' => {
                let mut word = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' || ch == '.' {
                        word.push(ch);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if word == "1" {
                    tokens.push(Token::One);
                } else if is_plain_identifier(&word) {
                    tokens.push(Token::Name(word));
                } else {
                    return Err(Error::FormulaSyntax(format!(
                        "'{word}' is not a variable name"
                    )));
                }
            }
            other => {
                return Err(Error::FormulaSyntax(format!(
                    "unsupported character '{other}' at offset {i}"
                )))
            }
        }
    }
    Ok(tokens)
}

/// Right-hand side summand: either the intercept marker or a `*`-product
/// of `:`-groups.
enum Summand {
    One,
    Product(Vec<Vec<String>>),
}

fn parse_rhs(tokens: &[Token]) -> Result<Vec<Summand>> {
    if tokens.is_empty() {
        return Err(Error::FormulaSyntax("right-hand side is empty".into()));
    }
    let mut summands = Vec::new();
    for chunk in tokens.split(|t| *t == Token::Plus) {
        if chunk.is_empty() {
            return Err(Error::FormulaSyntax("dangling '+'".into()));
        }
        if chunk == [Token::One] {
            summands.push(Summand::One);
            continue;
        }
        let mut groups = Vec::new();
        for factor in chunk.split(|t| *t == Token::Star) {
            let mut group = Vec::new();
            let mut expect_name = true;
            for tok in factor {
                match (tok, expect_name) {
                    (Token::Name(n), true) => {
                        group.push(n.clone());
                        expect_name = false;
                    }
                    (Token::Colon, false) => expect_name = true,
                    (Token::One, _) => {
                        return Err(Error::FormulaSyntax(
                            "'1' may only appear as a term by itself".into(),
                        ))
                    }
                    (Token::Tilde, _) => {
                        return Err(Error::FormulaSyntax("more than one '~'".into()))
                    }
                    _ => return Err(Error::FormulaSyntax("misplaced operator".into())),
                }
            }
            if expect_name {
                return Err(Error::FormulaSyntax("operator without operand".into()));
            }
            groups.push(group);
        }
        summands.push(Summand::Product(groups));
    }
    Ok(summands)
}

/// Parses `response ~ terms`; the family defaults to Gaussian.
pub fn parse_formula(text: &str) -> Result<ModelSpec> {
    let tokens = tokenize(text)?;
    let tilde = tokens
        .iter()
        .position(|t| *t == Token::Tilde)
        .ok_or_else(|| Error::FormulaSyntax("missing '~'".into()))?;
    let response = match &tokens[..tilde] {
        [Token::Name(n)] => n.clone(),
        [] => return Err(Error::FormulaSyntax("missing response before '~'".into())),
        _ => {
            return Err(Error::FormulaSyntax(
                "the response must be a single variable name".into(),
            ))
        }
    };
    let mut terms = Vec::new();
    for summand in parse_rhs(&tokens[tilde + 1..])? {
        let Summand::Product(groups) = summand else {
            continue;
        };
        // Every non-empty subset of the `*` operands contributes one term.
        let k = groups.len();
        for mask in 1u32..(1u32 << k) {
            let vars: Vec<String> = (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .flat_map(|i| groups[i].iter().cloned())
                .collect();
            terms.push(Term::new(vars)?);
        }
    }
    ModelSpec::new(response, terms, Family::Gaussian)
}

/// Canonical text form; parses back to an equal spec (family aside).
pub fn print_formula(spec: &ModelSpec) -> String {
    let rhs = if spec.terms.is_empty() {
        "1".to_string()
    } else {
        spec.terms
            .iter()
            .map(Term::to_string)
            .collect::<Vec<_>>()
            .join(" + ")
    };
    format!("{} ~ {rhs}", quote_name(&spec.response))
}

/// Adds `variable` as a main effect if absent. The family is preserved.
pub fn add_term(spec: &ModelSpec, variable: &str) -> Result<ModelSpec> {
    if variable == spec.response {
        return Err(Error::FormulaSemantic(format!(
            "'{variable}' is the response and cannot also be a predictor"
        )));
    }
    spec.with_term(Term::main(variable))
}

/// Checks that the spec can be fitted on `dataset`.
pub fn validate_against(spec: &ModelSpec, dataset: &Dataset) -> Result<()> {
    let vars = spec.variables();
    for v in &vars {
        dataset.column(v)?;
    }
    if dataset.column(&spec.response)?.kind() != ColumnKind::Continuous {
        return Err(Error::NonContinuousResponse(spec.response.clone()));
    }
    let rows = complete_cases(dataset, &vars)?;
    for v in spec.predictors() {
        let col = dataset.column(&v)?;
        if col.kind() == ColumnKind::Categorical {
            let observed: BTreeSet<usize> = rows.iter().filter_map(|&r| col.level_code(r)).collect();
            if observed.len() < 2 {
                return Err(Error::DegenerateFactor(v));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv, LoadOptions};
    use proptest::prelude::*;

    fn terms(spec: &ModelSpec) -> Vec<String> {
        spec.terms().iter().map(Term::label).collect()
    }

    #[test]
    fn parses_simple_formula() {
        let s = parse_formula("price ~ duration").unwrap();
        assert_eq!(s.response(), "price");
        assert_eq!(terms(&s), ["duration"]);
        assert_eq!(s.family(), Family::Gaussian);
    }

    #[test]
    fn star_expands_to_mains_and_interaction() {
        let s = parse_formula("price ~ duration * class").unwrap();
        assert_eq!(terms(&s), ["class", "duration", "class:duration"]);
        let s = parse_formula("y~a*b*c").unwrap();
        assert_eq!(terms(&s), ["a", "b", "c", "a:b", "a:c", "b:c", "a:b:c"]);
        // ':' binds tighter than '*'
        let s = parse_formula("y ~ a * b:c").unwrap();
        assert_eq!(terms(&s), ["a", "b", "c", "b:c", "a:b:c"]);
    }

    #[test]
    fn colon_adds_missing_mains() {
        let s = parse_formula("y ~ x:g").unwrap();
        assert_eq!(terms(&s), ["g", "x", "g:x"]);
    }

    #[test]
    fn duplicates_are_removed() {
        assert_eq!(terms(&parse_formula("y ~ x + x").unwrap()), ["x"]);
        assert_eq!(terms(&parse_formula("y ~ b:a + a:b").unwrap()), ["a", "b", "a:b"]);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["price duration", "", "price ~", "price ~ a +", "~ x", "y ~ x ~ z", "y ~ x - 1", "y ~ 0", "y ~ a:", "y ~ a + 1:b"] {
            assert!(
                matches!(parse_formula(bad), Err(Error::FormulaSyntax(_))),
                "{bad:?} should be a syntax error"
            );
        }
    }

    #[test]
    fn response_on_right_is_semantic_error() {
        assert!(matches!(parse_formula("y ~ x + y"), Err(Error::FormulaSemantic(_))));
        assert!(matches!(parse_formula("y ~ x:x"), Err(Error::FormulaSemantic(_))));
    }

    #[test]
    fn intercept_only_and_backticks() {
        let s = parse_formula("y ~ 1").unwrap();
        assert!(s.terms().is_empty());
        assert_eq!(print_formula(&s), "y ~ 1");
        let s = parse_formula("`ticket price` ~ `days left` + 1").unwrap();
        assert_eq!(s.response(), "ticket price");
        assert_eq!(print_formula(&s), "`ticket price` ~ `days left`");
    }

    #[test]
    fn printing_is_canonical() {
        let s = ModelSpec::new("price", vec![Term::main("duration")], Family::Gaussian).unwrap();
        assert_eq!(print_formula(&s), "price ~ duration");
        let s = ModelSpec::new(
            "price",
            vec![Term::new(["duration", "class"]).unwrap()],
            Family::Gaussian,
        )
        .unwrap();
        assert_eq!(print_formula(&s), "price ~ class + duration + class:duration");
    }

    #[test]
    fn add_term_cases() {
        let s = parse_formula("price ~ duration").unwrap().with_family(Family::Gamma);
        let t = add_term(&s, "class").unwrap();
        assert_eq!(print_formula(&t), "price ~ class + duration");
        assert_eq!(t.family(), Family::Gamma);
        assert_eq!(add_term(&s, "duration").unwrap(), s);
        assert_eq!(
            print_formula(&add_term(&parse_formula("y ~ 1").unwrap(), "x").unwrap()),
            "y ~ x"
        );
        assert!(matches!(add_term(&s, "price"), Err(Error::FormulaSemantic(_))));
    }

    #[test]
    fn without_variable_drops_interactions_too() {
        let s = parse_formula("y ~ a * b + c").unwrap();
        assert_eq!(terms(&s.without_variable("b")), ["a", "c"]);
    }

    #[test]
    fn canonical_json_form() {
        let s = parse_formula("price ~ duration * class").unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "response": "price",
                "terms": [["class"], ["duration"], ["class", "duration"]],
                "family": "gaussian",
                "intercept": true
            })
        );
        let back: ModelSpec = serde_json::from_value(serde_json::json!({
            "response": "price",
            "terms": [["duration", "class"]],
            "family": "lognormal"
        }))
        .unwrap();
        assert_eq!(back, s.with_family(Family::LogNormal));
        assert!(serde_json::from_value::<ModelSpec>(serde_json::json!({
            "response": "y", "terms": [["y"]]
        }))
        .is_err());
    }

    fn flight() -> Dataset {
        load_csv(
            b"price,duration,class\n100.5,1.5,economy\n200.5,2.5,economy\n650.5,3.5,business\n700.5,4.5,business\nNA,5.5,first\n",
            &LoadOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let ds = flight();
        assert!(validate_against(&parse_formula("price ~ duration").unwrap(), &ds).is_ok());
        assert_eq!(
            validate_against(&parse_formula("price ~ bogus").unwrap(), &ds),
            Err(Error::UnknownVariable("bogus".into()))
        );
        assert_eq!(
            validate_against(&parse_formula("class ~ duration").unwrap(), &ds),
            Err(Error::NonContinuousResponse("class".into()))
        );
        let one_level = load_csv(
            b"price,class\n1.5,economy\n2.5,economy\nNA,business\n",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(
            validate_against(&parse_formula("price ~ class").unwrap(), &one_level),
            Err(Error::DegenerateFactor("class".into()))
        );
    }

    fn arb_spec() -> impl Strategy<Value = ModelSpec> {
        let names = prop::sample::subsequence(vec!["a", "b", "c", "d", "x_1", "z.2"], 0..=5);
        (names, prop::collection::vec(prop::collection::vec(0usize..6, 1..=3), 0..6), 0usize..3).prop_map(
            |(pool, picks, fam)| {
                let mut ts = Vec::new();
                if !pool.is_empty() {
                    for pick in picks {
                        let mut vars: Vec<&str> = pick.iter().map(|i| pool[i % pool.len()]).collect();
                        vars.sort();
                        vars.dedup();
                        ts.push(Term::new(vars).unwrap());
                    }
                }
                let family = [Family::Gaussian, Family::Gamma, Family::LogNormal][fam];
                ModelSpec::new("resp", ts, family).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(spec in arb_spec()) {
            let back = parse_formula(&print_formula(&spec)).unwrap().with_family(spec.family());
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn hierarchy_holds(spec in arb_spec()) {
            for t in spec.terms() {
                for v in t.variables() {
                    prop_assert!(spec.has_main(v));
                }
            }
            prop_assert!(spec.terms().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
