use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest continuation representable in the per-length scheme.
pub const MAX_SENTENCE_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LengthScheme {
    /// `[1,7]`, `[8,13]`, `[14,∞)`.
    ThreeBin,
    /// One bin per length from 1 to 30.
    PerLength,
}

impl LengthScheme {
    pub fn bins(self) -> usize {
        match self {
            LengthScheme::ThreeBin => 3,
            LengthScheme::PerLength => MAX_SENTENCE_LEN,
        }
    }

    /// Human-readable range of lengths covered by `bin`.
    pub fn describe(self, bin: usize) -> String {
        match (self, bin) {
            (LengthScheme::ThreeBin, 0) => "[1,7]".into(),
            (LengthScheme::ThreeBin, 1) => "[8,13]".into(),
            (LengthScheme::ThreeBin, _) => "[14,inf)".into(),
            (LengthScheme::PerLength, b) => format!("{}", b + 1),
        }
    }
}

pub fn bin_length(n: usize, scheme: LengthScheme) -> Result<usize> {
    if n < 1 {
        return Err(Error::InvalidArgument("length must be at least 1".into()));
    }
    match scheme {
        LengthScheme::ThreeBin => Ok(match n {
            1..=7 => 0,
            8..=13 => 1,
            _ => 2,
        }),
        LengthScheme::PerLength if n > MAX_SENTENCE_LEN => Err(Error::InvalidArgument(format!(
            "length {n} exceeds {MAX_SENTENCE_LEN} in the per-length scheme"
        ))),
        LengthScheme::PerLength => Ok(n - 1),
    }
}
