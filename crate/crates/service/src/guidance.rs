//! Fixed guidance templates. No message text is generated.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    AfterFit,
    SkewDetected,
    Rejection,
}

pub const AFTER_FIT: &str =
    "You can inspect residuals, explore prediction variability using HOPs, or try a different distribution.";
pub const SKEW_DETECTED: &str = "A skewed distribution may better capture these patterns. Would you like to try it?";
pub const REJECTION: &str = "Please try a different query.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceMessage {
    pub trigger: Trigger,
    pub text: String,
}

impl GuidanceMessage {
    pub fn new(trigger: Trigger) -> Self {
        let text = match trigger {
            Trigger::AfterFit => AFTER_FIT,
            Trigger::SkewDetected => SKEW_DETECTED,
            Trigger::Rejection => REJECTION,
        };
        GuidanceMessage { trigger, text: text.to_string() }
    }
}

/// Whether a reply accepts a pending offer.
pub fn is_affirmative(text: &str) -> bool {
    const WORDS: &[&str] = &["yes", "y", "yeah", "yep", "sure", "ok", "okay", "please"];
    text.split(|c: char| !c.is_alphanumeric())
        .find(|t| !t.is_empty())
        .is_some_and(|first| WORDS.contains(&first.to_lowercase().as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affirmatives() {
        for t in ["yes", "Yes, try the skewed distribution", "sure!", " OK ", "okay then"] {
            assert!(is_affirmative(t), "{t}");
        }
        for t in ["no", "", "yesterday's prices", "show hops"] {
            assert!(!is_affirmative(t), "{t}");
        }
    }
}
