//! Train/test split manifests.
//!
//! A manifest is a TOML file mapping sequence ids to frame counts per split:
//!
//! ```toml
//! canonical = "rdvs"   # optional
//!
//! [train]
//! bear = 82
//!
//! [test]
//! car = 40
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(sequences, frames)` of the canonical RDVS training split.
pub const RDVS_TRAIN_TOTALS: (usize, usize) = (32, 2208);
/// `(sequences, frames)` of the canonical RDVS test split.
pub const RDVS_TEST_TOTALS: (usize, usize) = (27, 1879);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<String>,
    #[serde(default)]
    pub train: IndexMap<String, usize>,
    #[serde(default)]
    pub test: IndexMap<String, usize>,
}

impl SplitManifest {
    pub fn train_sequences(&self) -> Vec<String> {
        self.train.keys().cloned().collect()
    }

    pub fn test_sequences(&self) -> Vec<String> {
        self.test.keys().cloned().collect()
    }

    pub fn frame_counts(&self) -> BTreeMap<String, usize> {
        self.train
            .iter()
            .chain(&self.test)
            .map(|(k, &v)| (k.clone(), v))
            .collect()
    }

    pub fn train_totals(&self) -> (usize, usize) {
        (self.train.len(), self.train.values().sum())
    }

    pub fn test_totals(&self) -> (usize, usize) {
        (self.test.len(), self.test.values().sum())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: SplitManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(seq) = self.train.keys().find(|k| self.test.contains_key(*k)) {
            return Err(Error::Split(format!("sequence `{seq}` is in both train and test")));
        }
        if let Some((seq, _)) = self.train.iter().chain(&self.test).find(|(_, &n)| n == 0) {
            return Err(Error::Manifest(format!("sequence `{seq}` has no frames")));
        }
        match self.canonical.as_deref() {
            None => Ok(()),
            Some("rdvs") => {
                for (name, got, want) in [
                    ("train", self.train_totals(), RDVS_TRAIN_TOTALS),
                    ("test", self.test_totals(), RDVS_TEST_TOTALS),
                ] {
                    if got != want {
                        return Err(Error::Manifest(format!(
                            "canonical rdvs {name} split needs {} sequences / {} frames, found {} / {}",
                            want.0, want.1, got.0, got.1
                        )));
                    }
                }
                Ok(())
            }
            Some(other) => Err(Error::Manifest(format!("unknown canonical split `{other}`"))),
        }
    }
}

/// Reads and validates a split manifest.
pub fn default_split(path: &Path) -> Result<SplitManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SplitManifest::parse(&text)
}
