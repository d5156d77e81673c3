use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UneError};

/// Latent file path per split name (`"all"`, `"train"`, `"test"`, ...).
pub type SplitPaths = BTreeMap<String, String>;

/// JSON manifest tying latent files, attributes and the train/test split together.
///
/// Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    /// model id -> split name -> latent path.
    pub models: BTreeMap<String, SplitPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes_path: Option<String>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// path (as written in this manifest) -> hex SHA-256.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn n_total(&self) -> usize {
        self.train_indices.len() + self.test_indices.len()
    }

    /// Train and test must be disjoint and together cover `0..n_total`.
    pub fn validate_partition(&self) -> Result<()> {
        let n = self.n_total();
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n {
                return Err(UneError::Manifest(format!(
                    "index {i} outside 0..{n}; splits do not partition the dataset"
                )));
            }
            if seen[i] {
                return Err(UneError::Manifest(format!(
                    "index {i} appears more than once across splits"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| UneError::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate_partition()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| UneError::io(path, e))
    }

    pub fn resolve(&self, base_dir: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }

    pub fn latent_path(&self, model_id: &str, split: &str) -> Result<&str> {
        self.models
            .get(model_id)
            .ok_or_else(|| UneError::Key(format!("model {model_id:?} not in manifest")))?
            .get(split)
            .map(String::as_str)
            .ok_or_else(|| UneError::Key(format!("model {model_id:?} has no split {split:?}")))
    }

    /// Every path referenced by the manifest must exist; those with a recorded
    /// checksum must match it.
    pub fn verify_files(&self, base_dir: &Path) -> Result<()> {
        let referenced = self
            .models
            .values()
            .flat_map(|splits| splits.values())
            .chain(self.attributes_path.iter());
        for rel in referenced {
            let path = self.resolve(base_dir, rel);
            if !path.exists() {
                return Err(UneError::Manifest(format!(
                    "referenced file {} does not exist",
                    path.display()
                )));
            }
        }
        for (rel, expected) in &self.checksums {
            let path = self.resolve(base_dir, rel);
            let actual = sha256_file(&path)?;
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(UneError::Checksum {
                    path,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }

    /// Recomputes checksums for every referenced file.
    pub fn record_checksums(&mut self, base_dir: &Path) -> Result<()> {
        let referenced: Vec<String> = self
            .models
            .values()
            .flat_map(|splits| splits.values().cloned())
            .chain(self.attributes_path.iter().cloned())
            .collect();
        for rel in referenced {
            let digest = sha256_file(self.resolve(base_dir, &rel))?;
            self.checksums.insert(rel, digest);
        }
        Ok(())
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| UneError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> DatasetManifest {
        let mut models = BTreeMap::new();
        models.insert(
            "a".to_string(),
            BTreeMap::from([("all".to_string(), "a.lat1".to_string())]),
        );
        DatasetManifest {
            dataset_name: "toy".into(),
            models,
            attributes_path: Some("attrs.csv".into()),
            train_indices: vec![0, 2],
            test_indices: vec![1, 3],
            checksums: BTreeMap::new(),
        }
    }

    #[test]
    fn partition_rules() {
        assert!(manifest().validate_partition().is_ok());
        let mut m = manifest();
        m.test_indices = vec![1, 2];
        assert!(matches!(m.validate_partition(), Err(UneError::Manifest(_))));
        let mut m = manifest();
        m.test_indices = vec![1, 1];
        assert!(matches!(m.validate_partition(), Err(UneError::Manifest(_))));
    }

    #[test]
    fn checksums_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.lat1"), b"payload").unwrap();
        fs::write(dir.path().join("attrs.csv"), b"x\n1\n0\n1\n0\n").unwrap();
        let mut m = manifest();
        m.record_checksums(dir.path()).unwrap();
        assert_eq!(
            m.checksums["a.lat1"],
            "239f59ed55e737c77147cf55ad0c1b030b6d7ee748a7426952f9b852d5a935e5"
        );
        m.verify_files(dir.path()).unwrap();

        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);

        fs::write(dir.path().join("a.lat1"), b"tampered").unwrap();
        assert!(matches!(
            m.verify_files(dir.path()),
            Err(UneError::Checksum { .. })
        ));
        fs::remove_file(dir.path().join("attrs.csv")).unwrap();
        assert!(matches!(m.verify_files(dir.path()), Err(UneError::Manifest(_))));
    }
}
