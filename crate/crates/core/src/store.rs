//! On-disk checkpoint store.
//!
//! ```text
//! <root>/checkpoints/<id>/manifest.json
//! <root>/checkpoints/<id>/weights.bin      little-endian f64, parameter order
//! <root>/checkpoints/<id>/soup_audit.json  soups only
//! <root>/experiments/<name>/...
//! ```
//!
//! A checkpoint exists once its manifest does. Weights and sidecars are renamed into
//! place before the manifest, so an interrupted save never leaves a manifest behind.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ArchSpec, MetricKind, ParamVector};
use crate::pipeline::{Checkpoint, HyperConfig, Lineage};
use crate::soup::SoupResult;

pub const SCHEMA_VERSION: u32 = 1;
pub const STORE_ENV: &str = "WEIGHTSOUP_STORE";
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";
const AUDIT: &str = "soup_audit.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub id: String,
    pub arch: ArchSpec,
    pub config: Option<HyperConfig>,
    pub lineage: Lineage,
    pub val_metrics: BTreeMap<MetricKind, f64>,
    pub epochs_consumed: f64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub weights_file: String,
    pub param_count: usize,
    /// FNV-1a 64 of the raw weight bytes, as 16 hex digits.
    pub weights_checksum: String,
}

/// Points at which a save can be interrupted, for fault-injection tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SavePhase {
    WeightsWritten,
    SidecarsWritten,
    ManifestStaged,
}

pub fn encode_weights(params: &ParamVector) -> Vec<u8> {
    params.values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_weights(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Ids become directory names, so only a conservative character set is accepted.
pub fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{id:?} is not a valid id (use letters, digits, '-', '_' or '.')"
        )))
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Write to a temporary sibling and rename over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn same_content(a: &Checkpoint, b: &Checkpoint) -> bool {
    same_bits(&a.params.values, &b.params.values)
        && a.params.arch_signature == b.params.arch_signature
        && a.arch == b.arch
        && a.config == b.config
        && a.lineage == b.lineage
        && a.val_metrics == b.val_metrics
        && a.epochs_consumed.to_bits() == b.epochs_consumed.to_bits()
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("experiments"))?;
        Ok(Store { root })
    }

    /// Use `explicit` if given, otherwise the `WEIGHTSOUP_STORE` environment variable.
    pub fn resolve(explicit: Option<&Path>) -> Result<Store> {
        match explicit {
            Some(p) => Store::open(p),
            None => match std::env::var_os(STORE_ENV) {
                Some(p) if !p.is_empty() => Store::open(PathBuf::from(p)),
                _ => Err(Error::Config(format!(
                    "no store given: pass --store <dir> or set {STORE_ENV}"
                ))),
            },
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_dir(&self, id: &str) -> PathBuf {
        self.root.join("checkpoints").join(id)
    }

    pub fn experiment_dir(&self, name: &str) -> Result<PathBuf> {
        validate_id(name)?;
        let dir = self.root.join("experiments").join(name);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn contains(&self, id: &str) -> bool {
        validate_id(id).is_ok() && self.checkpoint_dir(id).join(MANIFEST).is_file()
    }

    /// Ids of every complete checkpoint, sorted.
    pub fn list_checkpoints(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("checkpoints"))? {
            let entry = entry?;
            if entry.path().join(MANIFEST).is_file() {
                if let Some(name) = entry.file_name().to_str() {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Save a checkpoint. Saving the same contents again is a no-op; different
    /// contents under an existing id is an [`Error::IdCollision`].
    pub fn save_checkpoint(&self, c: &Checkpoint) -> Result<String> {
        self.save_inner(c, &[], &mut |_| Ok(()))
    }

    /// [`Store::save_checkpoint`] with a hook run after each write phase; an error from
    /// the hook aborts the save at that point.
    pub fn save_checkpoint_with_hook(
        &self,
        c: &Checkpoint,
        hook: &mut dyn FnMut(SavePhase) -> Result<()>,
    ) -> Result<String> {
        self.save_inner(c, &[], hook)
    }

    /// Save a soup as a `stage = soup` checkpoint plus its audit sidecar.
    pub fn save_soup(&self, soup: &SoupResult, arch: &ArchSpec, root_id: Option<String>) -> Result<String> {
        let mut c = soup.to_checkpoint(arch, root_id);
        c.val_metrics.clear();
        let audit = serde_json::to_vec_pretty(soup)?;
        self.save_inner(&c, &[(AUDIT, audit)], &mut |_| Ok(()))
    }

    pub fn load_soup_audit(&self, id: &str) -> Result<serde_json::Value> {
        validate_id(id)?;
        let path = self.checkpoint_dir(id).join(AUDIT);
        if !path.is_file() {
            return Err(Error::MissingCheckpoint(format!("{id} has no soup audit")));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn save_inner(
        &self,
        c: &Checkpoint,
        sidecars: &[(&str, Vec<u8>)],
        hook: &mut dyn FnMut(SavePhase) -> Result<()>,
    ) -> Result<String> {
        validate_id(&c.id)?;
        c.params.check_arch(&c.arch)?;
        if self.contains(&c.id) {
            let existing = self.load_checkpoint(&c.id)?;
            return if same_content(&existing, c) {
                Ok(c.id.clone())
            } else {
                Err(Error::IdCollision(c.id.clone()))
            };
        }
        let dir = self.checkpoint_dir(&c.id);
        fs::create_dir_all(&dir)?;

        let bytes = encode_weights(&c.params);
        write_atomic(&dir.join(WEIGHTS), &bytes)?;
        hook(SavePhase::WeightsWritten)?;
        for (name, data) in sidecars {
            write_atomic(&dir.join(name), data)?;
        }
        hook(SavePhase::SidecarsWritten)?;

        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            id: c.id.clone(),
            arch: c.arch.clone(),
            config: c.config.clone(),
            lineage: c.lineage.clone(),
            val_metrics: c.val_metrics.clone(),
            epochs_consumed: c.epochs_consumed,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            weights_file: WEIGHTS.to_string(),
            param_count: c.params.len(),
            weights_checksum: format!("{:016x}", fnv1a64(&bytes)),
        };
        let tmp = dir.join("manifest.json.tmp");
        write_synced(&tmp, &(serde_json::to_string_pretty(&manifest)? + "\n").into_bytes())?;
        hook(SavePhase::ManifestStaged)?;
        fs::rename(&tmp, dir.join(MANIFEST))?;
        Ok(c.id.clone())
    }

    pub fn load_manifest(&self, id: &str) -> Result<Manifest> {
        validate_id(id)?;
        let path = self.checkpoint_dir(id).join(MANIFEST);
        if !path.is_file() {
            return Err(Error::MissingCheckpoint(id.to_string()));
        }
        let raw: serde_json::Value = serde_json::from_slice(&fs::read(&path)?)?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema {
                found: version,
                supported: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(raw)?)
    }

    /// Load and verify a checkpoint: schema version, checksum, length and architecture.
    pub fn load_checkpoint(&self, id: &str) -> Result<Checkpoint> {
        let m = self.load_manifest(id)?;
        let bytes = fs::read(self.checkpoint_dir(id).join(&m.weights_file))?;
        let found = fnv1a64(&bytes);
        let expected = u64::from_str_radix(&m.weights_checksum, 16)
            .map_err(|_| Error::Config(format!("{id}: malformed checksum {:?}", m.weights_checksum)))?;
        if found != expected {
            return Err(Error::ChecksumMismatch {
                id: id.to_string(),
                expected,
                found,
            });
        }
        let values = decode_weights(&bytes).ok_or_else(|| Error::DimensionMismatch {
            what: "weights file bytes",
            expected: m.param_count * 8,
            found: bytes.len(),
        })?;
        let params = ParamVector::from_values(&m.arch, values)?;
        Ok(Checkpoint {
            id: m.id,
            arch: m.arch,
            params,
            config: m.config,
            lineage: m.lineage,
            val_metrics: m.val_metrics,
            epochs_consumed: m.epochs_consumed,
        })
    }
}
