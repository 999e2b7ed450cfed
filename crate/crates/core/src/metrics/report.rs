use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSidecar, Story};
use crate::decoding::{decode, DecodeMethod, GenerationList, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::metrics::ngram::{bleu2, rouge, RougeVariant};
use crate::metrics::sets::{max_and_avg, self_bleu, MaxAvg, SelfBleuMode};
use crate::model::{forward_examples, Seq2Seq};

pub const SCALE_NOTE: &str = "mean of sentence-level scores in [0,1], shown x100";
pub const SCORER_PLACEHOLDER: &str = "n/a";

/// One metric over a set of contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub per_context: Vec<(String, f64)>,
    pub mean: f64,
    pub note: String,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>, per_context: Vec<(String, f64)>) -> Result<Self> {
        if per_context.is_empty() {
            return Err(Error::Empty("metric report without contexts".into()));
        }
        let mean = per_context.iter().map(|(_, v)| v).sum::<f64>() / per_context.len() as f64;
        Ok(MetricReport {
            metric: metric.into(),
            per_context,
            mean,
            note: SCALE_NOTE.into(),
        })
    }
}

/// Single-continuation quality with oracle attribute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub system: String,
    pub perplexity: f64,
    pub rouge1: f64,
    pub rouge_l: f64,
    pub bleu: f64,
    pub contexts: usize,
}

/// Perplexity and one decoded continuation per story under its gold
/// attribute value, scored against the gold continuation.
pub fn oracle_row(
    model: &Seq2Seq,
    system: &str,
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    method: &DecodeMethod,
) -> Result<OracleRow> {
    let examples = forward_examples(stories, sidecar, &model.vocab, &model.attribute)?;
    let perplexity = model.perplexity(&examples)?;
    let (mut b, mut r1, mut rl) = (Vec::new(), Vec::new(), Vec::new());
    for (ex, story) in examples.iter().zip(stories) {
        let hyps = decode(model, &ex.source, &ex.value, method, DEFAULT_MAX_LEN)?;
        let best = hyps.first().ok_or_else(|| Error::Empty("decoder produced no hypothesis".into()))?;
        let tokens = model.vocab.decode(&best.tokens);
        b.push((story.id.clone(), bleu2(&tokens, &story.continuation)));
        r1.push((story.id.clone(), rouge(&tokens, &story.continuation, RougeVariant::One)));
        rl.push((story.id.clone(), rouge(&tokens, &story.continuation, RougeVariant::L)));
    }
    Ok(OracleRow {
        system: system.to_owned(),
        perplexity,
        bleu: MetricReport::new("BLEU-2", b)?.mean,
        rouge1: MetricReport::new("ROUGE-1", r1)?.mean,
        rouge_l: MetricReport::new("ROUGE-L", rl)?.mean,
        contexts: stories.len(),
    })
}

/// Set-level scores of one generation system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRow {
    pub system: String,
    pub items_per_context: usize,
    pub bleu: MaxAvg,
    pub rouge1: MaxAvg,
    pub rouge_l: MaxAvg,
    pub self_bleu: f64,
    pub contexts: usize,
}

/// Mean over contexts of Max/Avg BLEU and ROUGE and of Self-BLEU.
pub fn set_row(system: &str, lists: &[GenerationList], stories: &[Story], mode: SelfBleuMode) -> Result<SetRow> {
    if lists.is_empty() {
        return Err(Error::Empty(format!("no generation lists for {system}")));
    }
    let gold: HashMap<&str, &Story> = stories.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut acc = [0.0; 7];
    for list in lists {
        let story = gold
            .get(list.context_id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("no gold continuation for context {}", list.context_id)))?;
        let texts: Vec<&[String]> = list.texts();
        let s = max_and_avg(&texts, &story.continuation)?;
        let vals = [s.bleu.max, s.bleu.avg, s.rouge1.max, s.rouge1.avg, s.rouge_l.max, s.rouge_l.avg, self_bleu(&texts, mode)?];
        for (a, v) in acc.iter_mut().zip(vals) {
            *a += v;
        }
    }
    let n = lists.len() as f64;
    let m = |i: usize| acc[i] / n;
    let pair = |i: usize| MaxAvg { max: m(i), avg: m(i + 1).min(m(i)) };
    Ok(SetRow {
        system: system.to_owned(),
        items_per_context: lists[0].items.len(),
        bleu: pair(0),
        rouge1: pair(2),
        rouge_l: pair(4),
        self_bleu: m(6),
        contexts: lists.len(),
    })
}

/// Layout of the oracle-attribute table, story-scorer columns left as placeholders.
pub fn oracle_table(rows: &[OracleRow]) -> String {
    let w = rows.iter().map(|r| r.system.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{SCALE_NOTE}; story scorer (O/R/I) not available");
    let _ = writeln!(
        out,
        "{:w$} | {:>8} | {:>7} | {:>7} | {:>6} | {:>3} | {:>3} | {:>3}",
        "system", "PPL", "ROUGE-1", "ROUGE-L", "BLEU", "O", "R", "I"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:w$} | {:>8.2} | {:>7.1} | {:>7.1} | {:>6.1} | {p:>3} | {p:>3} | {p:>3}",
            r.system,
            r.perplexity,
            100.0 * r.rouge1,
            100.0 * r.rouge_l,
            100.0 * r.bleu,
            p = SCORER_PLACEHOLDER
        );
    }
    out
}

/// Layout of the list-potential table.
pub fn set_table(rows: &[SetRow]) -> String {
    let w = rows.iter().map(|r| r.system.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{SCALE_NOTE}; (avg) in parentheses");
    let _ = writeln!(
        out,
        "{:>3} | {:w$} | {:>15} | {:>15} | {:>15} | {:>9}",
        "n", "system", "ROUGE-1 max(avg)", "ROUGE-L max(avg)", "BLEU max(avg)", "Self-BLEU"
    );
    let cell = |m: &MaxAvg| format!("{:.1} ({:.1})", 100.0 * m.max, 100.0 * m.avg);
    for r in rows {
        let _ = writeln!(
            out,
            "{:>3} | {:w$} | {:>15} | {:>16} | {:>15} | {:>9.1}",
            r.items_per_context,
            r.system,
            cell(&r.rouge1),
            cell(&r.rouge_l),
            cell(&r.bleu),
            100.0 * r.self_bleu
        );
    }
    out
}
