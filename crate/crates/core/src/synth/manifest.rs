use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, CompositeRecord, SynthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line: the record plus its split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: CompositeRecord,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// `key=value` snapshot of the configuration that produced the manifest.
    pub config: String,
}

impl Manifest {
    pub fn records(&self) -> impl Iterator<Item = &CompositeRecord> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CompositeRecord> {
        self.entries.iter().filter(move |e| e.split == split).map(|e| &e.record)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn config_path(path: &Path) -> PathBuf {
        path.with_extension("config")
    }

    /// Write the JSONL file and, next to it, the `.config` snapshot.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SynthError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(path, self.to_jsonl()).map_err(io_err(path))?;
        let cfg = Self::config_path(path);
        std::fs::write(&cfg, &self.config).map_err(io_err(&cfg))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, SynthError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line).map_err(|e| SynthError::Parse {
                path: origin.to_string(),
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { entries, config: String::new() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut m = Self::parse(&text, &path.display().to_string())?;
        m.config = std::fs::read_to_string(Self::config_path(path)).unwrap_or_default();
        Ok(m)
    }
}

/// Assign whole real-image groups to train/test.
///
/// Groups are keyed by `real_id`, visited in sorted order, shuffled with the
/// seed, and the first `round(fraction * groups)` go to train. Entries come
/// out sorted by record id.
pub fn build_manifest(records: Vec<CompositeRecord>, split_fraction: f64, seed: u64) -> Result<Manifest, SynthError> {
    if records.is_empty() {
        return Err(SynthError::Empty);
    }
    let mut groups: BTreeMap<String, Vec<CompositeRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.real_id.clone()).or_default().push(r);
    }
    let mut keys: Vec<String> = groups.keys().cloned().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (split_fraction.clamp(0.0, 1.0) * keys.len() as f64).round() as usize;

    let mut entries = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        let split = if k < n_train { Split::Train } else { Split::Test };
        for record in groups.remove(key).expect("key came from the map") {
            entries.push(ManifestEntry { record, split });
        }
    }
    entries.sort_by(|a, b| a.record.id.cmp(&b.record.id));
    Ok(Manifest { entries, config: String::new() })
}
