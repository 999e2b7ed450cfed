use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ngram::{bleu2, bleu2_multi, rouge, RougeVariant};

/// Maximum and arithmetic mean of one metric over a list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxAvg {
    pub max: f64,
    pub avg: f64,
}

impl MaxAvg {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("max/avg over an empty list".into()));
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = values.iter().sum::<f64>() / values.len() as f64;
        // Rounding in the mean may push it past an all-equal maximum.
        Ok(MaxAvg { max, avg: avg.min(max) })
    }
}

/// List-level scores of continuations against the gold continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListScores {
    pub bleu: MaxAvg,
    pub rouge1: MaxAvg,
    pub rouge_l: MaxAvg,
}

/// Max and average BLEU-2, ROUGE-1 and ROUGE-L of every item against `reference`.
pub fn max_and_avg<S: AsRef<[String]>>(items: &[S], reference: &[String]) -> Result<ListScores> {
    let per = |f: &dyn Fn(&[String]) -> f64| MaxAvg::of(&items.iter().map(|i| f(i.as_ref())).collect::<Vec<_>>());
    Ok(ListScores {
        bleu: per(&|c| bleu2(c, reference))?,
        rouge1: per(&|c| rouge(c, reference, RougeVariant::One))?,
        rouge_l: per(&|c| rouge(c, reference, RougeVariant::L))?,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfBleuMode {
    /// Mean of single-reference BLEU over ordered pairs.
    #[default]
    Pairwise,
    /// Each item scored once against all others as joint references.
    MultiReference,
}

/// Within-list BLEU-2; lower means a more diverse list.
pub fn self_bleu<S: AsRef<[String]>>(items: &[S], mode: SelfBleuMode) -> Result<f64> {
    let n = items.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("self-BLEU needs at least 2 items, got {n}")));
    }
    let items: Vec<&[String]> = items.iter().map(AsRef::as_ref).collect();
    let total: f64 = match mode {
        SelfBleuMode::Pairwise => {
            let sum: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| bleu2(items[i], items[j]))
                .sum();
            sum / (n * (n - 1)) as f64
        }
        SelfBleuMode::MultiReference => {
            let sum: f64 = (0..n)
                .map(|i| {
                    let refs: Vec<&[String]> = (0..n).filter(|&j| j != i).map(|j| items[j]).collect();
                    bleu2_multi(items[i], &refs)
                })
                .sum();
            sum / n as f64
        }
    };
    Ok(total.min(1.0))
}

/// Mean over contexts of `self_bleu`.
pub fn corpus_self_bleu<S: AsRef<[String]>>(lists: &[Vec<S>], mode: SelfBleuMode) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::Empty("no lists".into()));
    }
    let values = lists.iter().map(|l| self_bleu(l, mode)).collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
