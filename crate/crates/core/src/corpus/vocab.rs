use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::story::Story;
use crate::error::{Error, Result};

pub type TokenId = usize;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";

/// Token ↔ id map. Regular tokens take ids `0..n` in frequency order, then
/// `<unk>`, `<eos>` and `<pad>` follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from regular tokens (specials are appended).
    pub fn from_tokens(regular: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = regular
            .into_iter()
            .filter(|t| t != UNK && t != EOS && t != PAD)
            .collect();
        tokens.extend([UNK, EOS, PAD].map(str::to_owned));
        Vocabulary::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk(&self) -> TokenId {
        self.tokens.len() - 3
    }

    pub fn eos(&self) -> TokenId {
        self.tokens.len() - 2
    }

    pub fn pad(&self) -> TokenId {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or_else(|| self.unk())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Context sentences joined into one sequence, each closed by `<eos>`.
    pub fn encode_context<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Vec<TokenId> {
        let mut ids = Vec::new();
        for s in sentences {
            ids.extend(self.encode(s));
            ids.push(self.eos());
        }
        ids
    }

    /// Continuation ids terminated by `<eos>`.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        let mut ids = self.encode(tokens);
        ids.push(self.eos());
        ids
    }

    /// Tokens for `ids`, stopping at the first `<eos>` and skipping padding.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != self.eos())
            .filter(|&&i| i != self.pad())
            .map(|&i| self.token(i).unwrap_or(UNK).to_owned())
            .collect()
    }

    /// Hex SHA-256 over the ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Keeps the `size` most frequent tokens, ties broken lexicographically.
pub fn build_vocab(stories: &[Story], size: usize) -> Result<Vocabulary> {
    if size < 1 {
        return Err(Error::InvalidArgument("vocabulary size must be at least 1".into()));
    }
    if stories.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in stories.iter().flat_map(Story::tokens) {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().take(size).map(|(t, _)| t.to_owned()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(words: &[&str]) -> Story {
        let s: Vec<Vec<String>> = words
            .iter()
            .map(|w| w.split(' ').map(str::to_owned).collect())
            .collect();
        Story::new("t", s).unwrap()
    }

    #[test]
    fn small_corpus_keeps_everything() {
        let s = story(&["a b", "c d", "a", "b", "c"]);
        let v = build_vocab(&[s], 10_000).unwrap();
        assert_eq!(v.len(), 4 + 3);
        assert_eq!(v.id("zzz"), v.unk());
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        // a:2 b:3 c:2, size 2 keeps b then a (a < c)
        let s = story(&["a b", "a b", "b", "c", "c"]);
        let v = build_vocab(&[s], 2).unwrap();
        assert_eq!(v.tokens()[..2], ["b".to_string(), "a".to_string()]);
        assert_eq!(v.id("c"), v.unk());
    }

    #[test]
    fn counting_oracle() {
        let s = story(&["a b", "a b", "a b", "c", "d"]);
        // a:3 b:3 c:1 d:1
        let v = build_vocab(&[s], 2).unwrap();
        assert!(v.contains("a") && v.contains("b"));
        assert_eq!(v.id("c"), v.unk());
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn size_zero_is_error() {
        let s = story(&["a", "b", "c", "d", "e"]);
        assert!(build_vocab(&[s], 0).is_err());
    }

    #[test]
    fn deterministic_and_hashable() {
        let s = story(&["x y z", "y z", "z", "q", "r"]);
        let a = build_vocab(std::slice::from_ref(&s), 100).unwrap();
        let b = build_vocab(&[s], 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn context_encoding_marks_boundaries() {
        let v = Vocabulary::from_tokens(["a".to_string(), "b".to_string()]);
        let ids = v.encode_context(&[vec!["a"], vec!["b", "a"]]);
        assert_eq!(ids, vec![0, v.eos(), 1, 0, v.eos()]);
        assert_eq!(v.decode(&[1, 0, v.eos(), 1]), vec!["b", "a"]);
    }
}
