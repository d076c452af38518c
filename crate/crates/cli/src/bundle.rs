//! Model directory layout: the fitted artifacts as JSON files plus a
//! manifest, written so that re-fitting with identical config and seeds
//! reproduces every byte. The new-user counter is deliberately outside that
//! guarantee — it tracks serving-time drift, not the fit.

use std::collections::HashMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use blockrec::corpus::{ItemSimilarityMatrix, LsaModel};
use blockrec::error::{Error, Result};
use blockrec::ingest::{RatingsTable, UserProfile};
use blockrec::wsbm::WsbmModel;

use crate::config::PipelineConfig;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const LSA: &str = "lsa.json";
pub const ITEM_SIMS: &str = "item_sims.json";
pub const WSBM: &str = "wsbm.json";
pub const TRAIN: &str = "train.json";
pub const PROFILES: &str = "profiles.json";
const NEW_USER_COUNT: &str = "new_users.count";

/// Summary of a fit, written first so humans can inspect a bundle without
/// parsing the model files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub chosen_k: usize,
    pub k_range: [usize; 2],
    /// Community sizes, largest first.
    pub community_sizes: Vec<usize>,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub vocabulary: usize,
    pub lsa_rank: usize,
    pub seed: u64,
    pub config_sha256: String,
}

pub struct ModelBundle {
    pub manifest: Manifest,
    pub config: PipelineConfig,
    pub lsa: LsaModel,
    pub item_sims: ItemSimilarityMatrix,
    pub model: WsbmModel,
    pub train: RatingsTable,
    pub profiles: HashMap<u32, UserProfile>,
}

pub fn config_fingerprint(config: &PipelineConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation(format!("{name}: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

pub fn save(dir: &Path, bundle: &ModelBundle) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(dir, MANIFEST, &bundle.manifest)?;
    write_json(dir, CONFIG, &bundle.config)?;
    write_json(dir, LSA, &bundle.lsa)?;
    write_json(dir, ITEM_SIMS, &bundle.item_sims)?;
    write_json(dir, WSBM, &bundle.model)?;
    write_json(dir, TRAIN, &bundle.train)?;
    write_json(dir, PROFILES, &bundle.profiles)?;
    let counter = dir.join(NEW_USER_COUNT);
    std::fs::write(&counter, "0\n").map_err(|e| Error::io(&counter, e))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<ModelBundle> {
    Ok(ModelBundle {
        manifest: read_json(dir, MANIFEST)?,
        config: read_json(dir, CONFIG)?,
        lsa: read_json(dir, LSA)?,
        item_sims: read_json(dir, ITEM_SIMS)?,
        model: read_json(dir, WSBM)?,
        train: read_json(dir, TRAIN)?,
        profiles: read_json(dir, PROFILES)?,
    })
}

/// New users served since the last fit. Missing or mangled counter reads as
/// zero — the counter is advisory, never load-bearing.
pub fn new_user_count(dir: &Path) -> u64 {
    std::fs::read_to_string(dir.join(NEW_USER_COUNT))
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub fn bump_new_user_count(dir: &Path) -> Result<u64> {
    let count = new_user_count(dir) + 1;
    let path = dir.join(NEW_USER_COUNT);
    std::fs::write(&path, format!("{count}\n")).map_err(|e| Error::io(&path, e))?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_config_content() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(config_fingerprint(&a), config_fingerprint(&b));
        b.seed = 18;
        assert_ne!(config_fingerprint(&a), config_fingerprint(&b));
    }

    #[test]
    fn counter_survives_garbage_and_counts_up() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(new_user_count(dir.path()), 0);
        assert_eq!(bump_new_user_count(dir.path()).unwrap(), 1);
        assert_eq!(bump_new_user_count(dir.path()).unwrap(), 2);
        std::fs::write(dir.path().join(NEW_USER_COUNT), "not a number").unwrap();
        assert_eq!(new_user_count(dir.path()), 0);
    }
}
