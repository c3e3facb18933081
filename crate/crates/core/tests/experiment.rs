use std::path::Path;

use weightsoup::data::{export_csv, gen_task, AugmentLevel, TaskSpec};
use weightsoup::experiment::{
    run_and_persist, run_experiment, write_artifacts, CsvTask, ExperimentConfig, TaskSource, METHODS,
};
use weightsoup::store::Store;
use weightsoup::Error;

fn tiny_spec(seed: u64) -> TaskSpec {
    TaskSpec {
        n_samples: 300,
        n_source: 300,
        n_ood: 60,
        ..TaskSpec::rough(seed)
    }
}

fn tiny(spec: TaskSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(spec);
    cfg.pretrain.epochs = 2;
    cfg.warmup.epochs = 1;
    cfg.finetune.epochs = 2;
    cfg.grid.lrs = vec![1e-2, 1e-3];
    cfg.fgg.lrs = vec![1e-2, 1e-3];
    cfg.fgg.n_collect = 2;
    cfg.fgg.epochs_per_cycle = 2;
    cfg.analysis.lmc_points = 5;
    cfg.analysis.landscape_resolution = (5, 4);
    cfg
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_json(text) {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_json_round_trip() {
    for cfg in [ExperimentConfig::desk(TaskSpec::rough(4)), tiny(tiny_spec(1))] {
        let text = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}

#[test]
fn schema_version_is_checked_first() {
    let mut v = serde_json::to_value(tiny(tiny_spec(0))).unwrap();
    v["schema_version"] = 2.into();
    assert!(config_error(&v.to_string()).contains("schema_version"));
    v.as_object_mut().unwrap().remove("schema_version");
    assert!(config_error(&v.to_string()).contains("none"));
    assert!(config_error("not json").contains("JSON"));
}

#[test]
fn unknown_fields_are_rejected() {
    let base = serde_json::to_value(tiny(tiny_spec(0))).unwrap();
    for path in [&[][..], &["grid"][..], &["fgg"][..], &["optimizer"][..], &["task", "synthetic"][..]] {
        let mut v = base.clone();
        let mut node = &mut v;
        for k in path {
            node = &mut node[*k];
        }
        node["lerning_rate"] = 1.0.into();
        assert!(config_error(&v.to_string()).contains("lerning_rate"), "{path:?}");
    }
}

#[test]
fn optional_sections_default() {
    let mut v = serde_json::to_value(tiny(tiny_spec(0))).unwrap();
    for k in ["analysis", "optimizer", "metric"] {
        v.as_object_mut().unwrap().remove(k);
    }
    let cfg = ExperimentConfig::from_json(&v.to_string()).unwrap();
    assert_eq!(cfg.analysis.lmc_points, 11);
    assert_eq!(cfg.analysis.landscape_resolution, (25, 25));
    assert_eq!(cfg.optimizer, Default::default());
}

#[test]
fn invalid_values_are_config_errors() {
    let cases: Vec<fn(&mut ExperimentConfig)> = vec![
        |c| c.analysis.landscape_resolution = (2, 25),
        |c| c.analysis.lmc_points = 1,
        |c| c.fgg.n_collect = 0,
        |c| c.fgg.alpha2 = c.fgg.alpha1 * 2.0,
        |c| c.grid.seeds.clear(),
        |c| c.batch_size = 0,
    ];
    for (i, edit) in cases.into_iter().enumerate() {
        let mut cfg = tiny(tiny_spec(0));
        edit(&mut cfg);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))), "case {i}");
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))), "case {i}");
    }
}

#[test]
fn tiny_run_is_complete() {
    let run = run_experiment(&tiny(tiny_spec(2))).unwrap();
    assert_eq!(run.grid.len(), 2 * 3 * 2);
    assert_eq!(run.bases.len(), 2);
    assert!(run.fissions.iter().all(|f| f.len() == 2));
    assert!(run.failures.is_empty());

    let labels: Vec<&str> = run.methods.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(labels, METHODS);
    for m in &run.methods {
        assert!(run.test_score(&m.method).is_some());
        assert!(run.ood_score(&m.method).is_some());
    }
    let val = |m: &str| run.method(m).unwrap().val_score;
    assert!(val("greedy") >= val("gs_best"));
    assert!(val("fgg_greedy") >= val("fgg_best"));

    let pairs: Vec<(&str, usize)> = run.lmc_summary.iter().map(|s| (s.varies.as_str(), s.pairs)).collect();
    assert_eq!(pairs, [("seed", 6), ("augment", 12), ("lr", 6)]);
    for s in &run.lmc_summary {
        assert!(s.mean_barrier >= 0.0 && s.mean_barrier <= s.max_barrier);
    }
    assert_eq!(run.lmc.len(), 3);

    let grid = run.landscape.as_ref().unwrap();
    assert_eq!((grid.xs.len(), grid.ys.len()), (5, 4));
    assert_eq!(run.budget.grid_total, 12.0 * 2.0);
    let fission_epochs = 2.0 * 2.0 * 1.5;
    assert!((run.budget.fgg_total - (2.0 * 2.0 + fission_epochs)).abs() < 1e-12);
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let cfg = tiny(tiny_spec(5));
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_artifacts(&run_experiment(&cfg).unwrap(), &a).unwrap();
    write_artifacts(&run_experiment(&cfg).unwrap(), &b).unwrap();
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for want in [
        "budget.csv",
        "checkpoints.csv",
        "config.json",
        "landscape.csv",
        "landscape_meta.json",
        "lmc_lr.csv",
        "lmc_seed.csv",
        "lmc_summary.csv",
        "methods.json",
        "report.csv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(fa, fb);

    let saved = ExperimentConfig::load(&a.join("config.json")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn persisted_run_reloads_and_resaves() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path()).unwrap();
    let cfg = tiny(tiny_spec(6));
    let (run, dir) = run_and_persist(&store, "tiny", &cfg).unwrap();
    assert!(dir.join("report.csv").is_file());
    let listed = store.list_checkpoints().unwrap();
    for c in run.all_checkpoints() {
        assert!(listed.contains(&c.id));
        let back = store.load_checkpoint(&c.id).unwrap();
        assert_eq!(back.params.values, c.params.values);
        assert_eq!(back.lineage, c.lineage);
    }
    let gog = run.method("gog").unwrap();
    assert_eq!(store.load_checkpoint(&gog.id).unwrap().params.values, gog.params.values);
    assert!(store.load_soup_audit(&gog.id).is_ok());

    let before = read_dir_sorted(&dir);
    run_and_persist(&store, "tiny", &cfg).unwrap();
    assert_eq!(read_dir_sorted(&dir), before);
    assert_eq!(store.list_checkpoints().unwrap(), listed);
}

#[test]
fn csv_task_runs_like_its_source() {
    let spec = tiny_spec(7);
    let task = gen_task(&spec).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(format!("{n}.csv"));
    export_csv(&task.train, p("train")).unwrap();
    export_csv(&task.val, p("val")).unwrap();
    export_csv(&task.test, p("test")).unwrap();
    export_csv(&task.source, p("source")).unwrap();
    export_csv(&task.ood, p("shifted")).unwrap();

    let mut cfg = tiny(spec);
    cfg.task = TaskSource::Csv(CsvTask {
        train: p("train"),
        val: p("val"),
        test: p("test"),
        source: Some(p("source")),
        ood: [("shifted".to_string(), p("shifted"))].into(),
        label: "label".into(),
    });
    cfg.grid.augments = vec![AugmentLevel::Minimal];
    let text = cfg.to_json().unwrap();
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    let run = run_experiment(&cfg).unwrap();
    assert_eq!(run.report.columns, ["id", "shifted"]);
    assert!(run.report.cell("gog", "shifted").is_some());
    assert_eq!(run.arch.input_dim(), task.train.dim());
}
