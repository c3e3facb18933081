use weightsoup::data::{gen_task, AugmentLevel, TaskData, TaskSpec};
use weightsoup::nn::{evaluate, Activation, ArchSpec, MetricKind, ParamVector};
use weightsoup::optim::{is_collection_point, AdamWConfig, CyclicalSchedule};
use weightsoup::pipeline::*;
use weightsoup::Error;

fn task(seed: u64, n: usize) -> TaskData {
    let mut spec = TaskSpec::smooth(seed);
    spec.n_samples = n;
    spec.n_source = n;
    gen_task(&spec).unwrap()
}

fn arch() -> ArchSpec {
    ArchSpec::mlp(8, &[16], 3, Activation::Relu).unwrap()
}

fn cfg(lr: f64, epochs: usize) -> HyperConfig {
    HyperConfig {
        lr,
        epochs,
        warmup_epochs: 3,
        batch_size: 32,
        ..HyperConfig::default()
    }
}

fn warm(t: &TaskData) -> Checkpoint {
    let pre = pretrain_source(&arch(), &t.source, &cfg(1e-2, 5)).unwrap();
    linear_probe_warmup(&pre, &t.train, &cfg(1e-2, 0)).unwrap()
}

#[test]
fn pretrain_zero_epochs_is_the_initialization() {
    let t = task(1, 200);
    let c = pretrain_source(&arch(), &t.source, &cfg(1e-2, 0)).unwrap();
    assert_eq!(c.params, ParamVector::init(&arch(), 0));
    assert_eq!(c.stage(), Stage::Pretrained);
    assert_eq!(c.epochs_consumed, 0.0);
}

#[test]
fn pretrain_learns_and_is_deterministic() {
    let t = task(2, 600);
    let a = pretrain_source(&arch(), &t.source, &cfg(1e-2, 20)).unwrap();
    let b = pretrain_source(&arch(), &t.source, &cfg(1e-2, 20)).unwrap();
    assert_eq!(a, b);
    let acc = evaluate(&a.params, &a.arch, &t.source, MetricKind::Accuracy).unwrap();
    assert!(acc > t.source.majority_fraction() + 0.1, "acc {acc}");
    let init = weightsoup::nn::loss(&ParamVector::init(&arch(), 0), &arch(), &t.source.to_batch()).unwrap();
    let fin = weightsoup::nn::loss(&a.params, &arch(), &t.source.to_batch()).unwrap();
    assert!(fin < init);
}

#[test]
fn warmup_touches_only_the_head() {
    let t = task(3, 300);
    let pre = pretrain_source(&arch(), &t.source, &cfg(1e-2, 3)).unwrap();
    let w = linear_probe_warmup(&pre, &t.train, &cfg(1e-2, 0)).unwrap();
    let head = arch().head_range();
    for (k, (a, b)) in pre.params.values.iter().zip(&w.params.values).enumerate() {
        if !head.contains(&k) {
            assert_eq!(a.to_bits(), b.to_bits(), "frozen coordinate {k} moved");
        }
    }
    assert_ne!(pre.params.values[head.clone()], w.params.values[head]);
    assert_eq!(w.lineage.base_id.as_deref(), Some(pre.id.as_str()));
    assert_eq!(w.lineage.root_id.as_deref(), Some(w.id.as_str()));

    let none = linear_probe_warmup(&pre, &t.train, &HyperConfig { warmup_epochs: 0, ..cfg(1e-2, 0) }).unwrap();
    assert_eq!(none.params, pre.params);
}

#[test]
fn warmup_improves_the_head_on_the_target() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut spec = TaskSpec::rough(seed);
        spec.n_samples = 2000;
        spec.n_source = 400;
        let t = gen_task(&spec).unwrap();
        let pre = pretrain_source(&arch(), &t.source, &HyperConfig { seed, ..cfg(1e-2, 5) }).unwrap();
        let w = linear_probe_warmup(&pre, &t.train, &HyperConfig { seed, ..cfg(1e-2, 0) }).unwrap();
        let before = evaluate(&pre.params, &pre.arch, &t.val, MetricKind::MacroRecall).unwrap();
        let after = evaluate(&w.params, &w.arch, &t.val, MetricKind::MacroRecall).unwrap();
        wins += (after >= before) as usize;
    }
    assert!(wins >= 8, "warmup helped in {wins}/10");
}

#[test]
fn zero_lr_fine_tune_leaves_params_alone() {
    let t = task(4, 200);
    let w = warm(&t);
    for wd in [0.0, 0.01] {
        let c = HyperConfig {
            optimizer: AdamWConfig { weight_decay: wd, ..AdamWConfig::default() },
            ..cfg(0.0, 2)
        };
        let out = fine_tune(&w, &t.train, &t.val, &c).unwrap();
        assert_eq!(out.params, w.params);
    }
}

#[test]
fn fine_tune_is_deterministic_and_helps_on_smooth_task() {
    let t = task(5, 600);
    let w = warm(&t);
    let a = fine_tune(&w, &t.train, &t.val, &cfg(3e-3, 8)).unwrap();
    let b = fine_tune(&w, &t.train, &t.val, &cfg(3e-3, 8)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epochs_consumed, 8.0);
    let warm_acc = evaluate(&w.params, &w.arch, &t.val, MetricKind::Accuracy).unwrap();
    assert!(a.val_score(MetricKind::Accuracy).unwrap() >= warm_acc);
    let cyc = HyperConfig {
        schedule: ScheduleKind::Cyclical(CyclicalSchedule::new(4, 1e-3, 1e-4).unwrap()),
        ..cfg(1e-3, 1)
    };
    assert!(fine_tune(&w, &t.train, &t.val, &cyc).is_err());
}

#[test]
fn grid_cardinality_and_lineage() {
    let t = task(6, 150);
    let w = warm(&t);
    let full = GridSpec {
        lrs: vec![1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6, 1e-7],
        augments: AugmentLevel::ALL.to_vec(),
        seeds: vec![0, 1],
    };
    let out = grid_generate(&w, &full, &t.train, &t.val, &cfg(0.0, 1)).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.checkpoints.len(), 48);

    let desk = GridSpec { lrs: vec![1e-2, 3e-3, 1e-3, 3e-4], ..full };
    let cs = grid_generate(&w, &desk, &t.train, &t.val, &cfg(0.0, 1)).unwrap().into_result().unwrap();
    assert_eq!(cs.len(), 24);
    let mut ids: Vec<&str> = cs.iter().map(|c| c.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 24);
    for c in &cs {
        assert_eq!(c.params.arch_signature, w.params.arch_signature);
        assert_eq!(c.lineage.base_id.as_deref(), Some(w.id.as_str()));
        assert_eq!(c.stage(), Stage::Grid);
    }
    assert!(grid_generate(&w, &GridSpec { lrs: vec![], augments: vec![], seeds: vec![] }, &t.train, &t.val, &cfg(0.0, 1)).is_err());
}

#[test]
fn diverging_cells_are_reported() {
    let t = task(7, 150);
    let w = warm(&t);
    let grid = GridSpec { lrs: vec![1e-3, 1e300], augments: vec![AugmentLevel::Minimal], seeds: vec![0] };
    let out = grid_generate(&w, &grid, &t.train, &t.val, &cfg(0.0, 2)).unwrap();
    assert_eq!(out.checkpoints.len(), 1);
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].config.lr, 1e300);
    assert!(out.into_result().is_err());
}

#[test]
fn base_models_differ_only_in_lr() {
    let t = task(8, 200);
    let w = warm(&t);
    let lrs = [1e-2, 3e-3, 1e-3];
    let bases = fgg_base_generate(&w, &lrs, AugmentLevel::Heavy, 3, &t.train, &t.val, &cfg(0.0, 2))
        .unwrap()
        .into_result()
        .unwrap();
    assert_eq!(bases.len(), 3);
    for (b, lr) in bases.iter().zip(lrs) {
        let c = b.config.as_ref().unwrap();
        assert_eq!(c, &HyperConfig { lr, ..bases[0].config.clone().unwrap() });
        assert_eq!(c.augment, AugmentLevel::Heavy);
        assert_eq!(c.seed, 3);
        assert_eq!(b.stage(), Stage::Base);
    }
    let single = fgg_base_generate(&w, &[1e-3], AugmentLevel::Heavy, 3, &t.train, &t.val, &cfg(0.0, 2))
        .unwrap()
        .into_result()
        .unwrap();
    let direct = fine_tune(&w, &t.train, &t.val, single[0].config.as_ref().unwrap()).unwrap();
    assert_eq!(single[0].params, direct.params);
    assert_eq!(single[0].val_metrics, direct.val_metrics);
}

#[test]
fn fission_collects_at_each_minimum() {
    let t = task(9, 320);
    let w = warm(&t);
    let base = fine_tune(&w, &t.train, &t.val, &cfg(3e-3, 2)).unwrap();
    let sched = CyclicalSchedule::new(4, 3e-3, 1e-4).unwrap();
    let out = fgg_fission(&base, &sched, 5, &t.train, &t.val).unwrap();
    assert_eq!(out.total_steps, 18);
    assert_eq!(out.capture_steps, vec![2, 6, 10, 14, 18]);
    assert!(!out.truncated);
    for (k, (c, &s)) in out.checkpoints.iter().zip(&out.capture_steps).enumerate() {
        assert!(is_collection_point(s, 4).unwrap());
        assert_eq!(c.lineage.cycle_index, Some(k as u32 + 1));
        assert_eq!(c.lineage.base_id.as_deref(), Some(base.id.as_str()));
        assert_eq!(c.lineage.root_id, base.lineage.root_id);
        assert_eq!(c.stage(), Stage::Fission);
        let cfg = c.config.as_ref().unwrap();
        assert_eq!(cfg.lr, base.config.as_ref().unwrap().lr);
        assert_eq!(cfg.schedule, ScheduleKind::Cyclical(sched));
    }
    for i in 0..5 {
        for j in i + 1..5 {
            assert!(out.checkpoints[i].params.l2_distance(&out.checkpoints[j].params).unwrap() > 0.0);
        }
    }

    let one = fgg_fission(&base, &sched, 1, &t.train, &t.val).unwrap();
    assert_eq!(one.total_steps, 2);
    assert_eq!(one.capture_steps, vec![2]);
    assert!(fgg_fission(&base, &sched, 0, &t.train, &t.val).is_err());
}

#[test]
fn fgg_epoch_accounting_is_exact() {
    // 320 training rows at batch 32: 10 steps per epoch; 4-epoch cycles, 5 minima
    let t = task(10, 400);
    assert_eq!(t.train.len(), 320);
    let w = warm(&t);
    let bases = fgg_base_generate(&w, &[3e-3, 1e-3], AugmentLevel::Heavy, 0, &t.train, &t.val, &cfg(0.0, 3))
        .unwrap()
        .into_result()
        .unwrap();
    let sched = CyclicalSchedule::from_epochs(10, 4, 3e-3, 1e-4).unwrap();
    let mut total = 0.0;
    for b in &bases {
        total += b.epochs_consumed;
        let f = fgg_fission(b, &sched, 5, &t.train, &t.val).unwrap();
        assert_eq!(f.total_steps, 4 * 40 + 20);
        total += f.checkpoints.iter().map(|c| c.epochs_consumed).sum::<f64>();
    }
    assert_eq!(total, 2.0 * (3.0 + 18.0));
}

#[test]
fn fission_divergence_returns_partial_results() {
    let t = task(11, 200);
    let w = warm(&t);
    let base = fine_tune(&w, &t.train, &t.val, &cfg(1e-3, 1)).unwrap();
    // small steps through the first minimum, then the rate explodes
    let sched = CyclicalSchedule::new(4, 1e300, 1e-4).unwrap();
    let out = fgg_fission(&base, &sched, 3, &t.train, &t.val).unwrap();
    assert!(out.truncated);
    assert!(out.error.is_some());
    assert!(out.checkpoints.len() < 3);
    let e = fine_tune(&w, &t.train, &t.val, &cfg(1e300, 1)).unwrap_err();
    assert!(matches!(e, Error::Diverged { .. }), "{e}");
}
