use std::collections::BTreeMap;

use weightsoup::nn::{Activation, ArchSpec, MetricKind, ParamVector};
use weightsoup::pipeline::{Checkpoint, HyperConfig, Lineage, Stage};
use weightsoup::soup::{greedy_soup, Candidate};
use weightsoup::store::{encode_weights, fnv1a64, SavePhase, Store, SCHEMA_VERSION};
use weightsoup::{Error, Result};

fn checkpoint(id: &str, seed: u64) -> Checkpoint {
    let arch = ArchSpec::mlp(4, &[5], 3, Activation::Tanh).unwrap();
    let mut lineage = Lineage::new(Stage::Fission);
    lineage.base_id = Some("base-1".into());
    lineage.root_id = Some("warm-0".into());
    lineage.cycle_index = Some(2);
    let mut val_metrics = BTreeMap::new();
    val_metrics.insert(MetricKind::Accuracy, 0.1 + 0.2);
    val_metrics.insert(MetricKind::RocAucOvr, 2.0f64.sqrt() / 2.0);
    Checkpoint {
        id: id.into(),
        params: ParamVector::init(&arch, seed),
        arch,
        config: Some(HyperConfig::default().with_lr(3.3e-4)),
        lineage,
        val_metrics,
        epochs_consumed: 17.0 / 5.0,
    }
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut c = checkpoint("fission-00aa", 7);
    c.params.values[0] = -0.0;
    c.params.values[1] = f64::MIN_POSITIVE / 3.0;
    c.params.values[2] = 1.0 + f64::EPSILON;
    store.save_checkpoint(&c).unwrap();
    let back = store.load_checkpoint(&c.id).unwrap();
    assert_eq!(back, c);
    for (a, b) in back.params.values.iter().zip(&c.params.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.epochs_consumed.to_bits(), c.epochs_consumed.to_bits());
    assert_eq!(store.list_checkpoints().unwrap(), vec![c.id.clone()]);
}

#[test]
fn weights_file_layout_is_little_endian_f64() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let arch = ArchSpec::mlp(2, &[], 1, Activation::Relu).unwrap();
    assert_eq!(arch.param_count(), 3);
    let mut c = checkpoint("tiny", 0);
    c.params = ParamVector::from_values(&arch, vec![1.0, -2.5, 0.0]).unwrap();
    c.arch = arch;
    store.save_checkpoint(&c).unwrap();
    let bytes = std::fs::read(store.checkpoint_dir("tiny").join("weights.bin")).unwrap();
    let expected: [u8; 24] = [
        0, 0, 0, 0, 0, 0, 0xf0, 0x3f, // 1.0
        0, 0, 0, 0, 0, 0, 0x04, 0xc0, // -2.5
        0, 0, 0, 0, 0, 0, 0, 0, // 0.0
    ];
    assert_eq!(bytes, expected);
    assert_eq!(encode_weights(&c.params), expected);
    let m = store.load_manifest("tiny").unwrap();
    assert_eq!(m.schema_version, SCHEMA_VERSION);
    assert_eq!(m.weights_checksum, format!("{:016x}", fnv1a64(&expected)));
}

#[test]
fn fnv1a_reference_values() {
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
}

#[test]
fn tampered_weights_fail_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let c = checkpoint("grid-01", 1);
    store.save_checkpoint(&c).unwrap();
    let path = store.checkpoint_dir(&c.id).join("weights.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[13] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(store.load_checkpoint(&c.id), Err(Error::ChecksumMismatch { .. })));
}

#[test]
fn missing_id_and_unknown_schema() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert!(matches!(store.load_checkpoint("nope"), Err(Error::MissingCheckpoint(_))));
    assert!(store.load_checkpoint("../escape").is_err());

    let c = checkpoint("grid-02", 2);
    store.save_checkpoint(&c).unwrap();
    let path = store.checkpoint_dir(&c.id).join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap();
    assert!(matches!(
        store.load_checkpoint(&c.id),
        Err(Error::UnsupportedSchema { found: 9, supported: 1 })
    ));
}

#[test]
fn architecture_is_revalidated_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let c = checkpoint("grid-03", 3);
    store.save_checkpoint(&c).unwrap();
    let path = store.checkpoint_dir(&c.id).join("manifest.json");
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    m["arch"]["activation"] = serde_json::json!("relu");
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    assert!(store.load_checkpoint(&c.id).is_err());
}

#[test]
fn resaving_identical_content_is_idempotent_but_collisions_fail() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let c = checkpoint("base-7", 4);
    store.save_checkpoint(&c).unwrap();
    store.save_checkpoint(&c).unwrap();
    let mut other = checkpoint("base-7", 5);
    other.id = c.id.clone();
    assert!(matches!(store.save_checkpoint(&other), Err(Error::IdCollision(_))));
    assert_eq!(store.load_checkpoint(&c.id).unwrap(), c);
}

#[test]
fn interrupted_saves_leave_no_manifest() {
    for phase in [SavePhase::WeightsWritten, SavePhase::SidecarsWritten, SavePhase::ManifestStaged] {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let c = checkpoint("fission-crash", 6);
        let mut hook = |p: SavePhase| -> Result<()> {
            if p == phase {
                Err(Error::Config("injected crash".into()))
            } else {
                Ok(())
            }
        };
        assert!(store.save_checkpoint_with_hook(&c, &mut hook).is_err());
        assert!(!store.checkpoint_dir(&c.id).join("manifest.json").exists(), "{phase:?}");
        assert!(store.list_checkpoints().unwrap().is_empty());
        assert!(matches!(store.load_checkpoint(&c.id), Err(Error::MissingCheckpoint(_))));
        // a later save recovers cleanly
        store.save_checkpoint(&c).unwrap();
        assert_eq!(store.load_checkpoint(&c.id).unwrap(), c);
    }
}

#[test]
fn soups_get_an_audit_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let a = checkpoint("a", 1);
    let b = checkpoint("b", 2);
    let eval = |p: &ParamVector| -> Result<f64> { Ok(-p.values[0].abs()) };
    let soup = greedy_soup(&[Candidate::from(&a), Candidate::from(&b)], &eval).unwrap();
    let id = store.save_soup(&soup, &a.arch, Some("warm-0".into())).unwrap();
    let loaded = store.load_checkpoint(&id).unwrap();
    assert_eq!(loaded.stage(), Stage::Soup);
    assert_eq!(loaded.params, soup.params);
    let audit = store.load_soup_audit(&id).unwrap();
    assert_eq!(audit["method"], "greedy");
    assert_eq!(audit["audit"]["decisions"].as_array().unwrap().len(), 2);
    assert!(audit.get("params").is_none());
}

#[test]
fn resolve_requires_a_root() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Store::resolve(Some(dir.path())).is_ok());
}
