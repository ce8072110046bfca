//! Run manifests: a JSON record written next to every output artifact
//! capturing the resolved command line, input hashes, and seed, so a
//! run can be audited or replayed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wmlm_core::Result;

/// Everything needed to reproduce a run. Keys serialize in declaration
/// order; maps are sorted, so the layout is stable across runs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved argument vector (without the binary name); `replay`
    /// feeds this straight back through the parser.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Headline numbers (e.g. Pearson r, BLEU) for quick inspection.
    pub results: BTreeMap<String, serde_json::Value>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock before unix epoch")
        .as_millis() as u64
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn start(command: &str, argv: Vec<String>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            argv,
            config,
            inputs: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            results: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_result(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    /// Manifest path for an output artifact: `<artifact>.manifest.json`.
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string());
        name.push_str(".manifest.json");
        artifact.with_file_name(name)
    }

    /// Stamp the end time and write next to `artifact`.
    pub fn finish(mut self, artifact: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self)
            .expect("manifest serialization cannot fail");
        fs::write(Self::path_for(artifact), text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| wmlm_core::Error::Parse(format!("manifest {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_sits_next_to_the_artifact() {
        let p = RunManifest::path_for(Path::new("/tmp/run/out.csv"));
        assert_eq!(p, PathBuf::from("/tmp/run/out.csv.manifest.json"));
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("vocab.txt");
        fs::write(&artifact, "hello").unwrap();

        let mut m = RunManifest::start(
            "build-vocab",
            vec!["--corpus".into(), "c.txt".into()],
            serde_json::json!({"max_size": 10}),
        );
        m.add_input(&artifact).unwrap();
        m.seed = Some(7);
        m.add_result("vocab_len", 12);
        m.finish(&artifact).unwrap();

        let back = RunManifest::load(&RunManifest::path_for(&artifact)).unwrap();
        assert_eq!(back.command, "build-vocab");
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.results["vocab_len"], 12);
        assert_eq!(back.inputs.len(), 1);
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x");
        fs::write(&f, b"abc").unwrap();
        assert_eq!(
            sha256_file(&f).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
