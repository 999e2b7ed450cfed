use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::annotate::{annotate_heuristic, frames_of, Lexicons, Sentiment};
use crate::corpus::story::Story;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationSource {
    Ingested,
    Heuristic,
}

/// Attribute labels for one story's continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub sentiment: Sentiment,
    pub length: usize,
    pub predicates: Vec<String>,
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    /// Frame names of each context sentence, needed by the frame predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_frames: Option<Vec<Vec<String>>>,
    #[serde(default = "default_source")]
    pub source: AnnotationSource,
}

fn default_source() -> AnnotationSource {
    AnnotationSource::Ingested
}

/// Per-story annotations keyed by story id, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSidecar {
    records: Vec<Annotation>,
    index: HashMap<String, usize>,
}

impl AnnotationSidecar {
    pub fn new(records: Vec<Annotation>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate annotation for story {}", r.id)));
            }
        }
        Ok(AnnotationSidecar { records, index })
    }

    pub fn get(&self, id: &str) -> Option<&Annotation> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Annotation> {
        self.index.get(id).map(|&i| &mut self.records[i])
    }

    pub fn records(&self) -> &[Annotation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Annotations for `stories` in order; errors with every missing id.
    pub fn for_stories<'a>(&'a self, stories: &[Story]) -> Result<Vec<&'a Annotation>> {
        let missing: Vec<String> = stories
            .iter()
            .filter(|s| self.get(&s.id).is_none())
            .map(|s| s.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingAnnotations(missing));
        }
        Ok(stories.iter().filter_map(|s| self.get(&s.id)).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Annotation = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::new(records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Heuristic annotation of a whole story.
pub fn annotate_story(story: &Story, lex: &Lexicons) -> Annotation {
    let a = annotate_heuristic(&story.continuation, lex);
    Annotation {
        id: story.id.clone(),
        sentiment: a.sentiment,
        length: story.continuation_len(),
        predicates: a.predicates,
        frames: a.frames.into_iter().collect(),
        cluster: None,
        context_frames: Some(
            story
                .context
                .iter()
                .map(|s| frames_of(s, lex).into_iter().collect())
                .collect(),
        ),
        source: AnnotationSource::Heuristic,
    }
}

pub fn annotate_corpus(stories: &[Story], lex: &Lexicons) -> AnnotationSidecar {
    let records = stories.iter().map(|s| annotate_story(s, lex)).collect();
    // Story ids are unique per corpus; duplicates would already be a corpus error.
    AnnotationSidecar::new(records).unwrap_or_default()
}
