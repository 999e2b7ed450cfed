use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
        })
    }
}

impl FromStr for Sentiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "positive" => Ok(Sentiment::Positive),
            other => Err(Error::UnknownValue(format!("sentiment '{other}'"))),
        }
    }
}

/// Word lists driving the built-in annotators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
    pub verbs: BTreeSet<String>,
    /// Token → frame name.
    pub frame_triggers: BTreeMap<String, String>,
}

impl Lexicons {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Attributes the built-in annotator reads off one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceAnnotation {
    pub sentiment: Sentiment,
    pub predicates: Vec<String>,
    pub frames: BTreeSet<String>,
}

pub fn sentiment_of<S: AsRef<str>>(tokens: &[S], lex: &Lexicons) -> Sentiment {
    let score: i64 = tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            i64::from(lex.positive.contains(t)) - i64::from(lex.negative.contains(t))
        })
        .sum();
    match score.signum() {
        1 => Sentiment::Positive,
        -1 => Sentiment::Negative,
        _ => Sentiment::Neutral,
    }
}

/// Verbs in sentence order, first occurrence only.
pub fn predicates_of<S: AsRef<str>>(tokens: &[S], lex: &Lexicons) -> Vec<String> {
    let mut seen = HashSet::new();
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| lex.verbs.contains(*t) && seen.insert(*t))
        .map(str::to_owned)
        .collect()
}

pub fn frames_of<S: AsRef<str>>(tokens: &[S], lex: &Lexicons) -> BTreeSet<String> {
    tokens
        .iter()
        .filter_map(|t| lex.frame_triggers.get(t.as_ref()).cloned())
        .collect()
}

/// Lexicon-driven stand-in for external sentiment, SRL and frame analyzers.
pub fn annotate_heuristic<S: AsRef<str>>(tokens: &[S], lex: &Lexicons) -> SentenceAnnotation {
    SentenceAnnotation {
        sentiment: sentiment_of(tokens, lex),
        predicates: predicates_of(tokens, lex),
        frames: frames_of(tokens, lex),
    }
}
