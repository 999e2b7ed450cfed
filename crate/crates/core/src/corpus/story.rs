use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of context sentences preceding the continuation.
pub const CONTEXT_SENTENCES: usize = 4;

/// A five-sentence story: four context sentences and the continuation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub context: Vec<Vec<String>>,
    pub continuation: Vec<String>,
}

impl Story {
    pub fn new(id: impl Into<String>, sentences: Vec<Vec<String>>) -> Result<Self> {
        let id = id.into();
        if sentences.len() != CONTEXT_SENTENCES + 1 {
            return Err(Error::Contract(format!(
                "story {id} has {} sentences, expected 5",
                sentences.len()
            )));
        }
        if let Some(i) = sentences.iter().position(Vec::is_empty) {
            return Err(Error::Contract(format!("story {id}: sentence {} is empty", i + 1)));
        }
        let mut sentences = sentences;
        let continuation = sentences.pop().unwrap_or_default();
        Ok(Story {
            id,
            context: sentences,
            continuation,
        })
    }

    /// Continuation length in tokens, not counting the end marker.
    pub fn continuation_len(&self) -> usize {
        self.continuation.len()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Vec<String>> {
        self.context.iter().chain(std::iter::once(&self.continuation))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.sentences().flatten()
    }
}

pub fn tokenize_sentence(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_owned).collect()
}

/// Parses one corpus line: five tab-separated sentences, optionally preceded
/// by an id column.
pub fn parse_line(line: &str, default_id: &str) -> std::result::Result<Story, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let (id, sentences) = match fields.len() {
        5 => (default_id.to_owned(), &fields[..]),
        6 => (fields[0].trim().to_owned(), &fields[1..]),
        n => return Err(format!("expected 5 sentences (optionally after an id), found {n} fields")),
    };
    let sentences: Vec<Vec<String>> = sentences.iter().map(|s| tokenize_sentence(s)).collect();
    Story::new(id, sentences).map_err(|e| e.to_string())
}

/// Loads a tab-separated story corpus. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Story>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut stories = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let story = parse_line(line, &format!("{}", i + 1)).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        stories.push(story);
    }
    if stories.is_empty() {
        return Err(Error::Empty(format!("corpus {} has no stories", path.display())));
    }
    Ok(stories)
}

pub fn write_corpus(path: impl AsRef<Path>, stories: &[Story]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for s in stories {
        let cols: Vec<String> = s.sentences().map(|t| t.join(" ")).collect();
        writeln!(f, "{}\t{}", s.id, cols.join("\t")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
