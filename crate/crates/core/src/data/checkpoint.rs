use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::{Owner, ParamEntry, ParamStore, Tensor};

pub const CHECKPOINT_VERSION: &str = "ggan-ckpt-1";
const MANIFEST: &str = "manifest.json";
const SIDECAR: &str = "params.bin";

/// Everything needed to resume a run. Randomness is a pure function of `seed` and the
/// step counter, so no generator state is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub seed: u64,
    pub store: ParamStore,
    /// Free-form run description (instance, trainer config, dataset).
    pub meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    owner: Owner,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    step: u64,
    seed: u64,
    adam_steps: BTreeMap<Owner, u64>,
    /// Each parameter contributes its value, first and second moments, in this order.
    params: Vec<ManifestEntry>,
    sidecar_bytes: u64,
    meta: serde_json::Value,
}

/// Writes `dir/manifest.json` and the little-endian f64 sidecar `dir/params.bin`.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::new();
    let mut params = Vec::with_capacity(ckpt.store.len());
    for e in ckpt.store.entries() {
        for t in [&e.value, &e.m, &e.v] {
            for x in t.data() {
                blob.extend(x.to_le_bytes());
            }
        }
        params.push(ManifestEntry { name: e.name.clone(), owner: e.owner, shape: e.value.shape().to_vec() });
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION.into(),
        step: ckpt.step,
        seed: ckpt.seed,
        adam_steps: ckpt.store.adam_steps().clone(),
        params,
        sidecar_bytes: blob.len() as u64,
        meta: ckpt.meta.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::CorruptManifest(e.to_string()))?;
    fs::write(dir.join(MANIFEST), text + "\n")?;
    fs::write(dir.join(SIDECAR), blob)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, DataError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| DataError::CorruptManifest(e.to_string()))?;
    let version = raw.get("version").and_then(|v| v.as_str()).unwrap_or("");
    if version != CHECKPOINT_VERSION {
        return Err(DataError::VersionMismatch { found: version.into(), expected: CHECKPOINT_VERSION.into() });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| DataError::CorruptManifest(e.to_string()))?;
    let blob = fs::read(dir.join(SIDECAR))?;
    if blob.len() as u64 != manifest.sidecar_bytes {
        return Err(DataError::CorruptManifest(format!(
            "sidecar has {} bytes, manifest lists {}",
            blob.len(),
            manifest.sidecar_bytes
        )));
    }
    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut entries = Vec::with_capacity(manifest.params.len());
    for p in manifest.params {
        let len: usize = p.shape.iter().product();
        let mut take = || -> Result<Tensor, DataError> {
            let data: Vec<f64> = values.by_ref().take(len).collect();
            if data.len() != len {
                return Err(DataError::CorruptManifest(format!("sidecar ends inside {}", p.name)));
            }
            Tensor::new(p.shape.clone(), data).map_err(|e| DataError::CorruptManifest(e.to_string()))
        };
        let (value, m, v) = (take()?, take()?, take()?);
        entries.push(ParamEntry { name: p.name, owner: p.owner, value, m, v });
    }
    if values.next().is_some() {
        return Err(DataError::CorruptManifest("sidecar has trailing values".into()));
    }
    let store =
        ParamStore::from_parts(entries, manifest.adam_steps).map_err(|e| DataError::CorruptManifest(e.to_string()))?;
    Ok(Checkpoint { step: manifest.step, seed: manifest.seed, store, meta: manifest.meta })
}
