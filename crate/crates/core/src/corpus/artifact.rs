use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    payload: T,
}

/// Writes `payload` as a versioned JSON artifact.
pub fn save_artifact<T: Serialize>(path: impl AsRef<Path>, kind: &str, payload: &T) -> Result<()> {
    let path = path.as_ref();
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_owned(),
        payload,
    };
    let text = serde_json::to_string(&env)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_artifact<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    struct Header {
        schema_version: u32,
        kind: String,
    }
    let header: Header = serde_json::from_str(&text)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Version {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if header.kind != kind {
        return Err(Error::Corrupt(format!(
            "{}: expected a {kind} artifact, found {}",
            path.display(),
            header.kind
        )));
    }
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    Ok(env.payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_kind_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        save_artifact(&p, "thing", &vec![1, 2, 3]).unwrap();
        let v: Vec<i32> = load_artifact(&p, "thing").unwrap();
        assert_eq!(v, [1, 2, 3]);
        assert!(load_artifact::<Vec<i32>>(&p, "other").is_err());

        fs::write(&p, r#"{"schema_version": 9, "kind": "thing", "payload": []}"#).unwrap();
        match load_artifact::<Vec<i32>>(&p, "thing") {
            Err(Error::Version { found: 9, expected: 1 }) => {}
            other => panic!("{other:?}"),
        }
        fs::write(&p, "{not json").unwrap();
        assert!(matches!(load_artifact::<Vec<i32>>(&p, "thing"), Err(Error::Corrupt(_))));
    }
}
