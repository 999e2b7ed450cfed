use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::annotate::{frames_of, predicates_of, sentiment_of};
use crate::corpus::{
    annotate_story, bin_length, resolve_frames, AnnotationSidecar, ClusterModel, Lexicons, LengthScheme, SentenceEncoder,
    Sentiment, Story,
};
use crate::decoding::{decode, DecodeMethod, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{AttributeKind, AttributeValue, Seq2Seq};

/// The annotators used to read attribute values back off generated text.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    pub lexicons: &'a Lexicons,
    pub clusters: Option<(&'a ClusterModel, SentenceEncoder<'a>)>,
}

impl<'a> Evaluator<'a> {
    pub fn new(lexicons: &'a Lexicons) -> Self {
        Evaluator { lexicons, clusters: None }
    }

    pub fn with_clusters(mut self, model: &'a ClusterModel, encoder: SentenceEncoder<'a>) -> Self {
        self.clusters = Some((model, encoder));
        self
    }

    fn cluster_of(&self, tokens: &[String]) -> Result<usize> {
        let (model, encoder) = self
            .clusters
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("cluster evaluation needs a cluster model".into()))?;
        if tokens.is_empty() {
            return Ok(0);
        }
        Ok(model.assign(&encoder.encode(tokens)?))
    }
}

/// Which target values each context is decoded under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPlan {
    /// Every enumerated value (sentiment labels, top predicates, frames, clusters).
    EveryValue,
    /// The value read off the gold continuation (the length evaluation).
    Gold,
}

impl TargetPlan {
    pub fn default_for(kind: AttributeKind) -> Self {
        match kind {
            AttributeKind::Length3 | AttributeKind::Length30 => TargetPlan::Gold,
            _ => TargetPlan::EveryValue,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub method: DecodeMethod,
    /// Cap on enumerated predicate and frame values.
    pub value_limit: usize,
    pub plan: Option<TargetPlan>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            method: DecodeMethod::Greedy,
            value_limit: 100,
            plan: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentRow {
    pub value: String,
    pub matched: usize,
    pub total: usize,
}

impl ContainmentRow {
    pub fn percentage(&self) -> f64 {
        percent(self.matched, self.total)
    }
}

/// Target value against what the evaluator observed in the generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum MatchTable {
    /// Rows are target values, columns observed values.
    Confusion {
        attribute: AttributeKind,
        labels: Vec<String>,
        counts: Vec<Vec<usize>>,
    },
    /// Rows are target bins, column `d` counts generations with `|l − l_p| = d`.
    LengthDif {
        attribute: AttributeKind,
        scheme: LengthScheme,
        labels: Vec<String>,
        counts: Vec<Vec<usize>>,
    },
    /// Fraction of contexts whose generation contains the target.
    Containment {
        attribute: AttributeKind,
        rows: Vec<ContainmentRow>,
    },
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

fn row_percentages(counts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&c| percent(c, total)).collect()
        })
        .collect()
}

impl MatchTable {
    pub fn attribute(&self) -> AttributeKind {
        match self {
            MatchTable::Confusion { attribute, .. }
            | MatchTable::LengthDif { attribute, .. }
            | MatchTable::Containment { attribute, .. } => *attribute,
        }
    }

    /// Per-row percentages; empty for containment tables.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        match self {
            MatchTable::Confusion { counts, .. } | MatchTable::LengthDif { counts, .. } => row_percentages(counts),
            MatchTable::Containment { .. } => Vec::new(),
        }
    }

    /// Match percentage per target value: the confusion diagonal, the
    /// `dif = 0` column, or containment.
    pub fn match_rates(&self) -> Vec<(String, f64)> {
        match self {
            MatchTable::Confusion { labels, .. } => {
                let pct = self.percentages();
                labels.iter().enumerate().map(|(i, l)| (l.clone(), pct[i][i])).collect()
            }
            MatchTable::LengthDif { labels, .. } => {
                let pct = self.percentages();
                labels.iter().zip(pct).map(|(l, row)| (l.clone(), row[0])).collect()
            }
            MatchTable::Containment { rows, .. } => rows.iter().map(|r| (r.value.clone(), r.percentage())).collect(),
        }
    }

    /// Over all generations, percentage with `dif ≤ d`. Only length tables.
    pub fn dif_at_most(&self, d: usize) -> Option<f64> {
        match self {
            MatchTable::LengthDif { counts, .. } => {
                let total: usize = counts.iter().flatten().sum();
                let within: usize = counts.iter().map(|r| r.iter().take(d + 1).sum::<usize>()).sum();
                Some(percent(within, total))
            }
            _ => None,
        }
    }

    /// Aligned-text rendering in the layout of the published tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            MatchTable::Confusion { attribute, labels, .. } => {
                let _ = writeln!(out, "{attribute} match percentages (rows: target, columns: generated)");
                let width = labels.iter().map(String::len).max().unwrap_or(6).max(6);
                let _ = write!(out, "{:width$}", "target");
                for l in labels {
                    let _ = write!(out, " | {l:>width$}");
                }
                out.push('\n');
                for (l, row) in labels.iter().zip(self.percentages()) {
                    let _ = write!(out, "{l:width$}");
                    for v in row {
                        let _ = write!(out, " | {v:>width$.1}");
                    }
                    out.push('\n');
                }
            }
            MatchTable::LengthDif { scheme, .. } => {
                let bins = match scheme {
                    LengthScheme::ThreeBin => "3 bins",
                    LengthScheme::PerLength => "30 bins",
                };
                let _ = writeln!(out, "frequency (%) of generations with dif = |l - l_p|");
                let _ = writeln!(out, "{:8} | {:>7} | {:>7} | {:>7} | {:>7}", "", "dif=0", "dif<=1", "dif<=2", "dif<=3");
                let _ = write!(out, "{bins:8}");
                for d in 0..4 {
                    match self.dif_at_most(d) {
                        Some(v) if d < scheme.bins() => {
                            let _ = write!(out, " | {v:>7.1}");
                        }
                        _ => {
                            let _ = write!(out, " | {:>7}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            MatchTable::Containment { attribute, rows } => {
                let _ = writeln!(out, "{attribute} match percentages (M%): generations containing the target");
                let width = rows.iter().map(|r| r.value.len()).max().unwrap_or(5).max(5);
                let _ = writeln!(out, "{:width$} | {:>6} | {:>5}", "value", "M%", "n");
                for r in rows {
                    let _ = writeln!(out, "{:width$} | {:>6.1} | {:>5}", r.value, r.percentage(), r.total);
                }
            }
        }
        out
    }

    /// Plot data of match rate by target length (`target,total,dif0,dif_le1,dif_le2,dif_le3`).
    pub fn length_csv(&self) -> Option<String> {
        let MatchTable::LengthDif { labels, counts, .. } = self else {
            return None;
        };
        let mut out = String::from("target,total,dif0,dif_le1,dif_le2,dif_le3\n");
        for (l, row) in labels.iter().zip(counts) {
            let total: usize = row.iter().sum();
            let cum = |d: usize| percent(row.iter().take(d + 1).sum(), total);
            let _ = writeln!(out, "{l},{total},{:.2},{:.2},{:.2},{:.2}", cum(0), cum(1), cum(2), cum(3));
        }
        Some(out)
    }
}

fn gold_value(model: &Seq2Seq, story: &Story, sidecar: Option<&AnnotationSidecar>, ev: &Evaluator) -> Result<AttributeValue> {
    let kind = model.attribute.kind();
    if let Some(scheme) = kind.length_scheme() {
        return Ok(AttributeValue::Length(bin_length(story.continuation_len(), scheme)?));
    }
    if kind == AttributeKind::Clusters {
        return Ok(AttributeValue::Cluster(ev.cluster_of(&story.continuation)?));
    }
    let ann = match sidecar.and_then(|s| s.get(&story.id)) {
        Some(a) => a.clone(),
        None if sidecar.is_some() => return Err(Error::MissingAnnotations(vec![story.id.clone()])),
        None => annotate_story(story, ev.lexicons),
    };
    model.attribute.value_from_annotation(&ann, story)
}

/// Generates a continuation of every story under each target value and
/// checks the result with `evaluator`.
pub fn controllability_report(
    model: &Seq2Seq,
    stories: &[Story],
    sidecar: Option<&AnnotationSidecar>,
    evaluator: &Evaluator,
    cfg: &ControlConfig,
) -> Result<MatchTable> {
    let kind = model.attribute.kind();
    if matches!(kind, AttributeKind::None | AttributeKind::Bow) {
        return Err(Error::InvalidArgument(format!("no controllability evaluation for the {kind} attribute")));
    }
    if kind == AttributeKind::Clusters {
        match &evaluator.clusters {
            Some((c, _)) if c.k() == model.attribute.z_dim() => {}
            Some((c, _)) => {
                return Err(Error::InvalidArgument(format!(
                    "evaluator has {} clusters, model was trained with {}",
                    c.k(),
                    model.attribute.z_dim()
                )))
            }
            None => return Err(Error::InvalidArgument("cluster evaluation needs a cluster model".into())),
        }
    }
    if stories.is_empty() {
        return Err(Error::Empty("no stories to evaluate".into()));
    }
    let values = match kind {
        AttributeKind::Length3 | AttributeKind::Length30 => model.attribute.enumerate_values(usize::MAX)?,
        _ => model.attribute.enumerate_values(cfg.value_limit)?,
    };
    let labels: Vec<String> = values.iter().map(|v| model.attribute.describe(v)).collect();
    let plan = cfg.plan.unwrap_or_else(|| TargetPlan::default_for(kind));
    let n = values.len();
    let mut counts = vec![vec![0usize; n]; n];
    let mut rows: Vec<ContainmentRow> = labels
        .iter()
        .map(|l| ContainmentRow { value: l.clone(), matched: 0, total: 0 })
        .collect();

    for story in stories {
        let source = model.vocab.encode_context(&story.context);
        let targets: Vec<usize> = match plan {
            TargetPlan::EveryValue => (0..n).collect(),
            TargetPlan::Gold => {
                let gold = gold_value(model, story, sidecar, evaluator)?;
                match values.iter().position(|v| *v == gold) {
                    Some(i) => vec![i],
                    None => continue,
                }
            }
        };
        for t in targets {
            let hyps = decode(model, &source, &values[t], &cfg.method, DEFAULT_MAX_LEN)?;
            let best = hyps.first().ok_or_else(|| Error::Empty("decoder produced no hypothesis".into()))?;
            let tokens = model.vocab.decode(&best.tokens);
            match (&values[t], kind) {
                (AttributeValue::Sentiment(_), _) => {
                    let observed: Sentiment = sentiment_of(&tokens, evaluator.lexicons);
                    counts[t][observed.index()] += 1;
                }
                (AttributeValue::Length(target), _) => {
                    let scheme = kind.length_scheme().unwrap_or(LengthScheme::ThreeBin);
                    let observed = match (tokens.len(), scheme) {
                        (0, LengthScheme::ThreeBin) => 0,
                        (0, LengthScheme::PerLength) => usize::MAX,
                        (len, s) => bin_length(len, s)?,
                    };
                    let dif = if observed == usize::MAX { *target + 1 } else { observed.abs_diff(*target) };
                    counts[t][dif.min(n - 1)] += 1;
                }
                (AttributeValue::Cluster(_), _) => {
                    counts[t][evaluator.cluster_of(&tokens)?] += 1;
                }
                (AttributeValue::Predicates(target), _) => {
                    let found: BTreeSet<String> = predicates_of(&tokens, evaluator.lexicons).into_iter().collect();
                    rows[t].total += 1;
                    rows[t].matched += usize::from(target.iter().all(|p| found.contains(p)));
                }
                (AttributeValue::Frames(target), _) => {
                    let inv = model
                        .attribute
                        .frame_inventory()
                        .ok_or_else(|| Error::Contract("frame model without inventory".into()))?;
                    let names: Vec<String> = frames_of(&tokens, evaluator.lexicons).into_iter().collect();
                    let found = resolve_frames(&names, inv);
                    rows[t].total += 1;
                    rows[t].matched += usize::from(target.is_subset(&found));
                }
                (v, k) => {
                    return Err(Error::InvalidArgument(format!("value {v:?} does not belong to the {k} attribute")))
                }
            }
        }
    }

    Ok(match kind {
        AttributeKind::Predicates | AttributeKind::Frames => MatchTable::Containment { attribute: kind, rows },
        AttributeKind::Length3 | AttributeKind::Length30 => MatchTable::LengthDif {
            attribute: kind,
            scheme: kind.length_scheme().unwrap_or(LengthScheme::ThreeBin),
            labels,
            counts,
        },
        _ => MatchTable::Confusion { attribute: kind, labels, counts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_dif_aggregates() {
        let t = MatchTable::LengthDif {
            attribute: AttributeKind::Length3,
            scheme: LengthScheme::ThreeBin,
            labels: vec!["[1,7]".into(), "[8,13]".into(), "[14,inf)".into()],
            counts: vec![vec![9, 1, 0], vec![0, 0, 0], vec![5, 5, 0]],
        };
        assert_eq!(t.dif_at_most(0), Some(70.0));
        assert_eq!(t.dif_at_most(1), Some(100.0));
        for row in t.percentages() {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || (s - 100.0).abs() < 1e-9);
        }
        assert_eq!(t.match_rates()[0].1, 90.0);
        let csv = t.length_csv().unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("[1,7],10,90.00,100.00"));
        assert!(t.to_text().contains("3 bins"));
    }

    #[test]
    fn confusion_rates() {
        let t = MatchTable::Confusion {
            attribute: AttributeKind::Sentiment,
            labels: vec!["negative".into(), "neutral".into(), "positive".into()],
            counts: vec![vec![2, 2, 0], vec![0, 4, 0], vec![1, 0, 3]],
        };
        let rates = t.match_rates();
        assert_eq!(rates[0].1, 50.0);
        assert_eq!(rates[1].1, 100.0);
        assert_eq!(rates[2].1, 75.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<MatchTable>(&json).unwrap(), t);
    }
}
