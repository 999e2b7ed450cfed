use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FrameId = usize;

pub const TOP_FRAMES: usize = 100;
pub const CATCH_ALL: FrameId = 100;
pub const FRAME_SLOTS: usize = TOP_FRAMES + 1;
pub const CATCH_ALL_NAME: &str = "<other>";

/// The most frequent training frames plus one pooled catch-all id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FrameInventory {
    names: Vec<String>,
    index: HashMap<String, FrameId>,
}

impl TryFrom<Vec<String>> for FrameInventory {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        FrameInventory::from_ranked(names)
    }
}

impl From<FrameInventory> for Vec<String> {
    fn from(inv: FrameInventory) -> Self {
        inv.names
    }
}

impl FrameInventory {
    /// Builds from an already-ranked name list (at most 100 distinct names).
    pub fn from_ranked(names: Vec<String>) -> Result<Self> {
        if names.len() > TOP_FRAMES {
            return Err(Error::InvalidArgument(format!(
                "frame inventory holds at most {TOP_FRAMES} names, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate frame name {n}")));
            }
        }
        Ok(FrameInventory { names, index })
    }

    /// Ranks frames by how many sentences evoke them; ties go lexicographically.
    pub fn build<'a, I, S>(frame_sets: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for set in frame_sets {
            let distinct: BTreeSet<&str> = set.iter().map(AsRef::as_ref).collect();
            for f in distinct {
                *counts.entry(f).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let names = ranked
            .into_iter()
            .take(TOP_FRAMES)
            .map(|(n, _)| n.to_owned())
            .collect();
        Self::from_ranked(names).expect("ranked names are distinct and bounded")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> FrameId {
        self.index.get(name).copied().unwrap_or(CATCH_ALL)
    }

    pub fn name(&self, id: FrameId) -> Option<&str> {
        if id == CATCH_ALL {
            Some(CATCH_ALL_NAME)
        } else {
            self.names.get(id).map(String::as_str)
        }
    }

    /// Ids in use: every ranked frame plus the catch-all.
    pub fn ids(&self) -> impl Iterator<Item = FrameId> + '_ {
        (0..self.names.len()).chain(std::iter::once(CATCH_ALL))
    }
}

pub fn resolve_frames<S: AsRef<str>>(names: &[S], inventory: &FrameInventory) -> BTreeSet<FrameId> {
    names.iter().map(|n| inventory.id(n.as_ref())).collect()
}

/// The `n` most frequent resolved frame sets, deduplicated; ties ordered by the sets themselves.
pub fn top_frame_sets<'a, I, S>(frame_sets: I, inventory: &FrameInventory, n: usize) -> Vec<BTreeSet<FrameId>>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut counts: BTreeMap<BTreeSet<FrameId>, usize> = BTreeMap::new();
    for set in frame_sets {
        *counts.entry(resolve_frames(set, inventory)).or_default() += 1;
    }
    let mut ranked: Vec<(BTreeSet<FrameId>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(n).map(|(s, _)| s).collect()
}
