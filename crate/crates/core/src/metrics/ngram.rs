use std::collections::HashMap;
use std::hash::Hash;

/// Added to a zero clipped n-gram count before taking the geometric mean.
pub const BLEU_SMOOTHING: f64 = 1e-9;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU with unigrams and bigrams against one reference.
///
/// Returns 0 for an empty candidate or one that shares no unigram with the
/// reference. An order with no candidate n-grams (a one-token candidate has
/// no bigrams) is left out of the geometric mean.
pub fn bleu2<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    bleu2_multi(candidate, &[reference])
}

/// BLEU-2 with clipping against the maximum count over `references` and the
/// brevity penalty taken from the reference length closest to the candidate
/// (shorter wins ties).
pub fn bleu2_multi<T: Eq + Hash>(candidate: &[T], references: &[&[T]]) -> f64 {
    if candidate.is_empty() {
        log::warn!("bleu2 called with an empty candidate; scoring 0");
        return 0.0;
    }
    if references.is_empty() {
        return 0.0;
    }
    let c = candidate.len();
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=2 {
        let total = c.saturating_sub(n - 1);
        if total == 0 {
            continue;
        }
        let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        let matched: usize = ngram_counts(candidate, n)
            .into_iter()
            .map(|(gram, k)| {
                let cap = ref_counts.iter().map(|rc| rc.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                k.min(cap)
            })
            .sum();
        if matched == 0 && n == 1 {
            return 0.0;
        }
        let num = if matched == 0 { BLEU_SMOOTHING } else { matched as f64 };
        log_sum += (num / total as f64).ln();
        orders += 1;
    }
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / orders as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RougeVariant {
    /// Unigram overlap.
    One,
    /// Longest common subsequence.
    L,
}

fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE F1 (β = 1). Empty inputs score 0.
pub fn rouge<T: Eq + Hash>(candidate: &[T], reference: &[T], variant: RougeVariant) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let overlap = match variant {
        RougeVariant::One => {
            let rc = ngram_counts(reference, 1);
            ngram_counts(candidate, 1)
                .into_iter()
                .map(|(g, k)| k.min(rc.get(g).copied().unwrap_or(0)))
                .sum()
        }
        RougeVariant::L => lcs_len(candidate, reference),
    };
    f1(overlap, candidate.len(), reference.len())
}

/// Length of the longest common subsequence, in O(|b|) memory.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}
