//! Templated five-sentence stories with known attribute labels, lexicons for
//! the built-in annotators and seeded random word vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_corpus, Annotation, AnnotationSidecar, AnnotationSource, EmbeddingTable, LengthScheme, Lexicons, Sentiment, Story,
};
use crate::error::{Error, Result};

const NAMES: [(&str, bool); 10] = [
    ("sam", true),
    ("tom", true),
    ("jake", true),
    ("carl", true),
    ("ben", true),
    ("ana", false),
    ("kim", false),
    ("lucy", false),
    ("emma", false),
    ("mia", false),
];
const OBJECTS: [&str; 12] = [
    "lamp", "bike", "phone", "coat", "chair", "watch", "guitar", "camera", "radio", "kettle", "hat", "clock",
];
const ADJECTIVES: [&str; 6] = ["red", "small", "old", "shiny", "large", "blue"];
const PLACES: [&str; 6] = ["store", "mall", "market", "shop", "school", "library"];
const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const KIN: [&str; 6] = ["sister", "brother", "mother", "father", "aunt", "uncle"];
const NUMBERS: [&str; 5] = ["five", "ten", "twenty", "forty", "fifty"];
const POSITIVE: [&str; 3] = ["happily", "gladly", "proudly"];
const NEGATIVE: [&str; 3] = ["sadly", "angrily", "grimly"];

/// Continuation verbs and the frame each evokes.
pub const VERB_FRAMES: [(&str, &str); 10] = [
    ("bought", "Commerce_buy"),
    ("sold", "Commerce_sell"),
    ("fixed", "Repair"),
    ("found", "Locating"),
    ("lost", "Losing"),
    ("painted", "Create_physical_artwork"),
    ("washed", "Cleaning"),
    ("returned", "Return"),
    ("borrowed", "Borrowing"),
    ("wrapped", "Enclosing"),
];
const CONTEXT_VERBS: [(&str, &str); 4] = [
    ("needed", "Needing"),
    ("went", "Motion"),
    ("saw", "Perception_experience"),
    ("had", "Possession"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub stories: usize,
    pub seed: u64,
    pub embedding_dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            stories: 500,
            seed: 11,
            embedding_dim: 100,
        }
    }
}

/// Generated stories with everything needed to annotate and embed them.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub stories: Vec<Story>,
    pub lexicons: Lexicons,
    pub embeddings: EmbeddingTable,
    /// Labels known from generation, identical to what the lexicon annotator reads.
    pub sidecar: AnnotationSidecar,
}

/// Paths written by [`SyntheticCorpus::write`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct SyntheticFiles {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub corpus: PathBuf,
    pub lexicons: PathBuf,
    pub embeddings: PathBuf,
    pub sidecar: PathBuf,
}

impl SyntheticCorpus {
    /// The first `stories − dev` stories and the last `dev`.
    pub fn split(&self, dev: usize) -> Result<(&[Story], &[Story])> {
        if dev == 0 || dev >= self.stories.len() {
            return Err(Error::InvalidArgument(format!(
                "dev split of {dev} from {} stories",
                self.stories.len()
            )));
        }
        Ok(self.stories.split_at(self.stories.len() - dev))
    }

    pub fn write(&self, dir: impl AsRef<Path>, dev: usize) -> Result<SyntheticFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (train, dev_set) = self.split(dev)?;
        let files = SyntheticFiles {
            train: dir.join("train.tsv"),
            dev: dir.join("dev.tsv"),
            corpus: dir.join("all.tsv"),
            lexicons: dir.join("lexicons.json"),
            embeddings: dir.join("embeddings.txt"),
            sidecar: dir.join("sidecar.jsonl"),
        };
        write_corpus(&files.train, train)?;
        write_corpus(&files.dev, dev_set)?;
        write_corpus(&files.corpus, &self.stories)?;
        self.lexicons.save(&files.lexicons)?;
        self.embeddings.save(&files.embeddings)?;
        self.sidecar.save(&files.sidecar)?;
        Ok(files)
    }
}

pub fn lexicons() -> Lexicons {
    let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<BTreeSet<_>>();
    let mut triggers = BTreeMap::new();
    let mut add = |words: &[&str], frame: &str| {
        for w in words {
            triggers.insert(w.to_string(), frame.to_string());
        }
    };
    for (verb, frame) in VERB_FRAMES.iter().chain(&CONTEXT_VERBS) {
        add(&[verb], frame);
    }
    add(&PLACES, "Buildings");
    add(&DAYS, "Calendric_unit");
    add(&KIN, "Kinship");
    add(&NUMBERS, "Cardinal_numbers");
    add(&["dollars", "cash"], "Money");
    add(&POSITIVE, "Emotion_directed");
    add(&NEGATIVE, "Emotion_directed");
    let verbs: Vec<&str> = VERB_FRAMES.iter().chain(&CONTEXT_VERBS).map(|(v, _)| *v).collect();
    Lexicons {
        positive: set(&POSITIVE),
        negative: set(&NEGATIVE),
        verbs: set(&verbs),
        frame_triggers: triggers,
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

struct Draw<'a> {
    sentiment: Sentiment,
    place: bool,
    day: bool,
    kin: bool,
    price: bool,
    adverb: &'a str,
}

impl Draw<'_> {
    fn len(&self) -> usize {
        5 + usize::from(self.sentiment != Sentiment::Neutral)
            + 3 * usize::from(self.place)
            + 2 * usize::from(self.day)
            + 3 * usize::from(self.kin)
            + 3 * usize::from(self.price)
    }
}

fn story(i: usize, rng: &mut ChaCha8Rng) -> Result<(Story, Annotation)> {
    let (name, male) = *NAMES.choose(rng).unwrap_or(&NAMES[0]);
    let (pro, poss) = if male { ("he", "his") } else { ("she", "her") };
    let pick = |rng: &mut ChaCha8Rng, xs: &[&'static str]| *xs.choose(rng).unwrap_or(&xs[0]);
    let object = pick(rng, &OBJECTS);
    let place = pick(rng, &PLACES);
    let number = pick(rng, &NUMBERS);
    let (verb, verb_frame) = *VERB_FRAMES.choose(rng).unwrap_or(&VERB_FRAMES[0]);

    // Rejection-sample modifiers until the length falls in a uniformly drawn bin.
    let bin = rng.gen_range(0..LengthScheme::ThreeBin.bins());
    let draw = loop {
        let sentiment = Sentiment::ALL[rng.gen_range(0..3)];
        let d = Draw {
            sentiment,
            place: rng.gen_bool(0.5),
            day: rng.gen_bool(0.5),
            kin: rng.gen_bool(0.5),
            price: rng.gen_bool(0.5),
            adverb: match sentiment {
                Sentiment::Positive => pick(rng, &POSITIVE),
                Sentiment::Negative => pick(rng, &NEGATIVE),
                Sentiment::Neutral => "",
            },
        };
        if crate::corpus::bin_length(d.len(), LengthScheme::ThreeBin)? == bin {
            break d;
        }
    };

    let mut cont = vec![name.to_string()];
    let mut frames = BTreeSet::from([verb_frame.to_string()]);
    if !draw.adverb.is_empty() {
        cont.push(draw.adverb.into());
        frames.insert("Emotion_directed".into());
    }
    cont.extend(words(&format!("{verb} the {object}")));
    if draw.place {
        cont.extend(words(&format!("at the {place}")));
        frames.insert("Buildings".into());
    }
    if draw.day {
        cont.extend(words(&format!("on {}", pick(rng, &DAYS))));
        frames.insert("Calendric_unit".into());
    }
    if draw.kin {
        cont.extend(words(&format!("with {poss} {}", pick(rng, &KIN))));
        frames.insert("Kinship".into());
    }
    if draw.price {
        let (phrase, evoked): (String, &[&str]) = match rng.gen_range(0..3) {
            0 => (format!("for {number} dollars"), &["Cardinal_numbers", "Money"]),
            1 => (format!("using {poss} cash"), &["Money"]),
            _ => (format!("{number} more times"), &["Cardinal_numbers"]),
        };
        cont.extend(words(&phrase));
        frames.extend(evoked.iter().map(|f| f.to_string()));
    }
    cont.push(".".into());
    debug_assert_eq!(cont.len(), draw.len());

    let context = [
        format!("{name} needed a new {object} ."),
        format!("{pro} went to the {place} ."),
        format!("{pro} saw a {} {} .", pick(rng, &ADJECTIVES), pick(rng, &OBJECTS)),
        format!("{pro} had {number} dollars ."),
    ];
    let context_frames = vec![
        vec!["Needing".to_string()],
        vec!["Buildings".to_string(), "Motion".to_string()],
        vec!["Perception_experience".to_string()],
        vec!["Cardinal_numbers".to_string(), "Money".to_string(), "Possession".to_string()],
    ];
    let id = format!("syn{i:04}");
    let mut sentences: Vec<Vec<String>> = context.iter().map(|s| words(s)).collect();
    sentences.push(cont.clone());
    let story = Story::new(id.clone(), sentences)?;
    let ann = Annotation {
        id,
        sentiment: draw.sentiment,
        length: cont.len(),
        predicates: vec![verb.to_string()],
        frames: frames.into_iter().collect(),
        cluster: None,
        context_frames: Some(context_frames),
        source: AnnotationSource::Ingested,
    };
    Ok((story, ann))
}

fn vocabulary_words(lex: &Lexicons) -> BTreeSet<String> {
    let fixed = [
        "a", "new", "to", "the", "at", "on", "with", "his", "her", "for", "dollars", "using", "more", "times", "he", "she", ".",
    ];
    NAMES
        .iter()
        .map(|(n, _)| *n)
        .chain(OBJECTS)
        .chain(ADJECTIVES)
        .chain(PLACES)
        .chain(DAYS)
        .chain(KIN)
        .chain(NUMBERS)
        .chain(fixed)
        .map(str::to_owned)
        .chain(lex.frame_triggers.keys().cloned())
        .chain(lex.verbs.iter().cloned())
        .collect()
}

/// Builds the corpus deterministically from `cfg.seed`.
pub fn synthesize(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.stories == 0 {
        return Err(Error::InvalidArgument("at least one story is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lexicons = lexicons();
    let mut embeddings = EmbeddingTable::new(cfg.embedding_dim)?;
    for w in vocabulary_words(&lexicons) {
        let v: Vec<f64> = (0..cfg.embedding_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        embeddings.insert(w, v)?;
    }
    let (stories, annotations): (Vec<_>, Vec<_>) = (0..cfg.stories)
        .map(|i| story(i, &mut rng))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(SyntheticCorpus {
        stories,
        lexicons,
        embeddings,
        sidecar: AnnotationSidecar::new(annotations)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{annotate_story, bin_length};

    #[test]
    fn labels_agree_with_the_lexicon_annotator() {
        let c = synthesize(&SyntheticConfig { stories: 200, ..SyntheticConfig::default() }).unwrap();
        for (s, a) in c.stories.iter().zip(c.sidecar.records()) {
            let mut h = annotate_story(s, &c.lexicons);
            assert_eq!(h.source, AnnotationSource::Heuristic);
            h.source = AnnotationSource::Ingested;
            assert_eq!(&h, a, "{}", s.id);
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let cfg = SyntheticConfig::default();
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.stories, b.stories);
        let mut bins = [0usize; 3];
        let mut sentiments = [0usize; 3];
        for (s, ann) in a.stories.iter().zip(a.sidecar.records()) {
            bins[bin_length(s.continuation_len(), LengthScheme::ThreeBin).unwrap()] += 1;
            sentiments[ann.sentiment.index()] += 1;
            assert!((5..=20).contains(&s.continuation_len()));
        }
        assert!(bins.iter().all(|&n| n > 100), "{bins:?}");
        assert!(sentiments.iter().all(|&n| n > 80), "{sentiments:?}");
        let vocab: BTreeSet<&String> = a.stories.iter().flat_map(|s| s.tokens()).collect();
        assert!(vocab.len() <= 500);
        assert!(vocab.iter().all(|w| a.embeddings.get(w).is_some()));
    }
}
