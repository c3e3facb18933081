use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weightsoup::analysis::*;
use weightsoup::data::{gen_task, LabeledDataset, SplitRole, TaskData, TaskSpec};
use weightsoup::nn::{evaluate, Activation, ArchSignature, ArchSpec, MetricKind, ParamVector};
use weightsoup::pipeline::{Checkpoint, Lineage, Stage};
use weightsoup::soup::uniform_soup;
use weightsoup::Error;

fn setup() -> (ArchSpec, TaskData) {
    let arch = ArchSpec::mlp(8, &[12], 3, Activation::Relu).unwrap();
    let mut spec = TaskSpec::smooth(4);
    spec.n_samples = 300;
    (arch, gen_task(&spec).unwrap())
}

fn ckpt(id: &str, arch: &ArchSpec, params: ParamVector) -> Checkpoint {
    Checkpoint {
        id: id.into(),
        arch: arch.clone(),
        params,
        config: None,
        lineage: Lineage::new(Stage::Grid),
        val_metrics: BTreeMap::new(),
        epochs_consumed: 0.0,
    }
}

fn raw(values: Vec<f64>) -> ParamVector {
    ParamVector {
        arch_signature: ArchSignature(values.len() as u64),
        values,
    }
}

#[test]
fn lmc_identical_endpoints_give_flat_curve() {
    let (arch, task) = setup();
    let a = ckpt("a", &arch, ParamVector::init(&arch, 1));
    let curve = lmc_sweep(&a, &a.clone(), 3, &task.val, MetricKind::Accuracy).unwrap();
    assert_eq!(curve.lambdas, vec![0.0, 0.5, 1.0]);
    assert!(curve.scores.iter().all(|&s| s == curve.scores[0]));
    assert_eq!(curve.barrier(), 0.0);
}

#[test]
fn lmc_endpoints_and_midpoint_match_direct_evaluation() {
    let (arch, task) = setup();
    let a = ckpt("a", &arch, ParamVector::init(&arch, 1));
    let b = ckpt("b", &arch, ParamVector::init(&arch, 2));
    for metric in [MetricKind::Accuracy, MetricKind::RocAucOvr] {
        let curve = lmc_sweep_with_test(&a, &b, 11, &task.val, Some(&task.test), metric).unwrap();
        assert_eq!(curve.lambdas.len(), 11);
        assert_eq!(curve.scores[10], evaluate(&a.params, &arch, &task.val, metric).unwrap());
        assert_eq!(curve.scores[0], evaluate(&b.params, &arch, &task.val, metric).unwrap());
        assert_eq!(
            curve.test_scores.as_ref().unwrap()[10],
            evaluate(&a.params, &arch, &task.test, metric).unwrap()
        );
        let mid = uniform_soup(&[&a.params, &b.params]).unwrap();
        let want = evaluate(&mid, &arch, &task.val, metric).unwrap();
        assert!((curve.scores[5] - want).abs() <= 1e-12);
    }
    let other = ckpt("o", &arch, raw(vec![0.0; 3]));
    assert!(matches!(
        lmc_sweep(&a, &other, 5, &task.val, MetricKind::Accuracy),
        Err(Error::SignatureMismatch { .. })
    ));
    assert!(lmc_sweep(&a, &b, 1, &task.val, MetricKind::Accuracy).is_err());
}

#[test]
fn barrier_is_worse_endpoint_minus_curve_minimum() {
    let curve = LmcCurve {
        endpoints: ("a".into(), "b".into()),
        lambdas: lambda_grid(5),
        scores: vec![0.9, 0.7, 0.4, 0.6, 0.8],
        test_scores: None,
        metric: MetricKind::Accuracy,
    };
    assert!((curve.barrier() - 0.4).abs() < 1e-15);
}

#[test]
fn plane_basis_hand_geometry() {
    let b = plane_basis(&raw(vec![0.0, 0.0]), &raw(vec![2.0, 0.0]), &raw(vec![1.0, 1.0])).unwrap();
    assert_eq!(b.u, vec![1.0, 0.0]);
    assert_eq!(b.v, vec![0.0, 1.0]);
    assert_eq!(b.anchor_coords, [(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)]);
}

#[test]
fn plane_basis_rejects_degenerate_anchors() {
    let o = raw(vec![1.0, 1.0, 1.0]);
    assert!(matches!(plane_basis(&o, &o, &raw(vec![0.0, 2.0, 1.0])), Err(Error::DegeneratePlane(_))));
    assert!(matches!(
        plane_basis(&o, &raw(vec![2.0, 2.0, 2.0]), &raw(vec![-3.0, -3.0, -3.0])),
        Err(Error::DegeneratePlane(_))
    ));
}

#[test]
fn plane_basis_reconstructs_random_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mut draw = || raw((0..100).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (t1, t2, t3) = (draw(), draw(), draw());
        let b = plane_basis(&t1, &t2, &t3).unwrap();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        assert!(dot(&b.u, &b.v).abs() < 1e-9);
        assert!((dot(&b.u, &b.u).sqrt() - 1.0).abs() < 1e-12);
        assert!((dot(&b.v, &b.v).sqrt() - 1.0).abs() < 1e-12);
        for (t, (x, y)) in [&t1, &t2, &t3].into_iter().zip(b.anchor_coords) {
            assert!(b.point(x, y).l2_distance(t).unwrap() < 1e-9);
        }
    }
}

#[test]
fn grid_corners_match_anchor_evaluations() {
    let (arch, task) = setup();
    let t1 = ParamVector::init(&arch, 10);
    let t2 = ParamVector::init(&arch, 11);
    let t3 = ParamVector::init(&arch, 12);
    let basis = plane_basis(&t1, &t2, &t3).unwrap();
    let [c1, c2, c3] = basis.anchor_coords;
    let ids = ["a".to_string(), "b".to_string(), "c".to_string()];
    let metric = MetricKind::RocAucOvr;
    let err = |p: &ParamVector| 1.0 - evaluate(p, &arch, &task.val, metric).unwrap();

    let ext = Extent { x_min: c1.0, x_max: c2.0, y_min: c1.1, y_max: c1.1 + 1.0 };
    let g = landscape_grid(&basis, ids.clone(), ext, (2, 2), &arch, &task.val, metric).unwrap();
    assert!((g.values[0][0] - err(&t1)).abs() <= 1e-12);
    assert!((g.values[0][1] - err(&t2)).abs() <= 1e-12);

    let ext = Extent { x_min: c3.0, x_max: c3.0 + 1.0, y_min: c3.1 - 1.0, y_max: c3.1 };
    let g = landscape_grid(&basis, ids, ext, (2, 2), &arch, &task.val, metric).unwrap();
    assert!((g.values[1][0] - err(&t3)).abs() <= 1e-12);
}

#[test]
fn grid_is_pure_and_transposes_with_its_axes() {
    let (arch, task) = setup();
    let basis = plane_basis(
        &ParamVector::init(&arch, 1),
        &ParamVector::init(&arch, 2),
        &ParamVector::init(&arch, 3),
    )
    .unwrap();
    let ids = ["a".to_string(), "b".to_string(), "c".to_string()];
    let ext = Extent::around(&basis.anchor_coords, DEFAULT_MARGIN);
    let m = MetricKind::Accuracy;
    let g = landscape_grid(&basis, ids.clone(), ext, (7, 5), &arch, &task.val, m).unwrap();
    let again = landscape_grid(&basis, ids.clone(), ext, (7, 5), &arch, &task.val, m).unwrap();
    assert_eq!(g, again);
    assert_eq!(g.values.len(), 5);
    assert_eq!(g.values[0].len(), 7);
    let t = landscape_grid(&basis.transposed(), ids, ext.transposed(), (5, 7), &arch, &task.val, m).unwrap();
    for i in 0..5 {
        for j in 0..7 {
            assert_eq!(g.values[i][j], t.values[j][i]);
        }
    }
}

#[test]
fn default_extent_pads_bounding_box() {
    let e = Extent::around(&[(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)], 0.2);
    assert_eq!(e, Extent { x_min: -0.4, x_max: 2.4, y_min: -0.2, y_max: 1.2 });
}

#[test]
fn constant_model_region_is_flat() {
    let (arch, task) = setup();
    // zero head and biases: logits are 0 whatever the first layer holds
    let n = arch.param_count();
    let first_layer = arch.layers()[0].weights.clone();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    u[first_layer.start] = 1.0;
    v[first_layer.start + 1] = 1.0;
    let basis = PlaneBasis {
        origin: ParamVector::zeros(&arch),
        u,
        v,
        anchor_coords: [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
    };
    let ids = ["a".to_string(), "b".to_string(), "c".to_string()];
    let ext = Extent { x_min: -3.0, x_max: 3.0, y_min: -3.0, y_max: 3.0 };
    let g = landscape_grid(&basis, ids, ext, (6, 6), &arch, &task.val, MetricKind::Accuracy).unwrap();
    let first = g.values[0][0];
    assert!(g.values.iter().flatten().all(|&x| x == first));
    assert_eq!(g.local_minima(), 0);
}

fn sample(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    let xs = linspace(-1.0, 1.0, nx);
    let ys = linspace(-1.0, 1.0, ny);
    ys.iter().map(|&y| xs.iter().map(|&x| f(x, y)).collect()).collect()
}

#[test]
fn local_minima_counts() {
    assert_eq!(count_local_minima(&sample(25, 25, |x, y| (x - 0.1).powi(2) + 2.0 * (y + 0.2).powi(2))), 1);
    assert_eq!(count_local_minima(&sample(25, 25, |_, _| 0.3)), 0);
    // two planted gaussian wells at (-0.5, 0) and (0.5, 0)
    let wells = |x: f64, y: f64| {
        -(-((x + 0.5).powi(2) + y * y) / 0.05).exp() - 0.8 * (-((x - 0.5).powi(2) + y * y) / 0.05).exp()
    };
    assert_eq!(count_local_minima(&sample(25, 25, wells)), 2);
    // a flat-bottomed basin is a plateau, not a strict minimum
    assert_eq!(count_local_minima(&sample(25, 25, |x, y| (x * x + y * y - 0.2).max(0.0))), 0);
    assert_eq!(count_local_minima(&[vec![1.0, 0.0], vec![1.0, 1.0]]), 0);
}

#[test]
fn ood_report_cells_match_direct_evaluation() {
    let (arch, task) = setup();
    let params: Vec<ParamVector> = (0..5).map(|s| ParamVector::init(&arch, 100 + s)).collect();
    let labels: Vec<String> = (0..5).map(|i| format!("m{i}")).collect();
    let entries: Vec<ReportEntry> = labels
        .iter()
        .zip(&params)
        .map(|(l, p)| ReportEntry { label: l, id: l, params: p })
        .collect();
    let sets = [("ood", &task.ood), ("val", &task.val), ("train", &task.train), ("source", &task.source)];
    for metric in MetricKind::ALL {
        let t = ood_report(&entries, &arch, &task.test, &sets, metric).unwrap();
        assert_eq!(t.columns, vec!["id", "ood", "val", "train", "source"]);
        for (row, p) in t.rows.iter().zip(&params) {
            let all = [&task.test, &task.ood, &task.val, &task.train, &task.source];
            for (cell, ds) in row.scores.iter().zip(all) {
                assert_eq!(*cell, Some(evaluate(p, &arch, ds, metric).unwrap()));
            }
        }
    }

    let one = ood_report(&entries[..1], &arch, &task.test, &[], MetricKind::MacroF1).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!(
        one.rows[0].scores,
        vec![Some(evaluate(&params[0], &arch, &task.test, MetricKind::MacroF1).unwrap())]
    );

    let dup = [entries[0], ReportEntry { label: "again", ..entries[0] }];
    let t = ood_report(&dup, &arch, &task.test, &sets, MetricKind::Accuracy).unwrap();
    assert_eq!(t.rows[0].scores, t.rows[1].scores);
    assert_eq!(t.cell("again", "ood"), t.cell("m0", "ood"));
}

#[test]
fn undefined_metric_is_marked_not_zeroed() {
    let (arch, task) = setup();
    let single = LabeledDataset::new(Array2::zeros((4, 8)), vec![1; 4], 3, SplitRole::Ood, "x").unwrap();
    let p = ParamVector::init(&arch, 1);
    let e = [ReportEntry { label: "m", id: "m", params: &p }];
    let t = ood_report(&e, &arch, &task.test, &[("one-class", &single)], MetricKind::RocAucOvr).unwrap();
    assert!(t.rows[0].scores[0].is_some());
    assert_eq!(t.rows[0].scores[1], None);
}

fn costed(stage: Stage, epochs: f64) -> Checkpoint {
    let mut c = ckpt("x", &ArchSpec::mlp(1, &[], 2, Activation::Relu).unwrap(), raw(vec![]));
    c.lineage.stage = stage;
    c.epochs_consumed = epochs;
    c
}

#[test]
fn budget_full_scale_arithmetic() {
    let mut cs: Vec<Checkpoint> = (0..48).map(|_| costed(Stage::Grid, 50.0)).collect();
    for _ in 0..8 {
        cs.push(costed(Stage::Base, 50.0));
        // 17 epochs of fission spread over 5 collected checkpoints
        for e in [1.0, 4.0, 4.0, 4.0, 4.0] {
            cs.push(costed(Stage::Fission, e));
        }
    }
    cs.push(costed(Stage::Pretrained, 30.0));
    cs.push(costed(Stage::Warmstart, 5.0));
    let b = compute_budget(&cs);
    assert_eq!(b.grid_total, 2400.0);
    assert_eq!(b.fgg_total, 536.0);
    assert!((b.ratio.unwrap() - 536.0 / 2400.0).abs() < 1e-15);
    assert!(b.ratio.unwrap() < 0.25);
    assert_eq!(b.per_stage[&Stage::Pretrained], 30.0);
}

#[test]
fn budget_without_fgg_and_loop_oracle() {
    let b = compute_budget(&[costed(Stage::Grid, 10.0)]);
    assert_eq!(b.fgg_total, 0.0);
    assert_eq!(b.ratio, Some(0.0));
    assert_eq!(compute_budget(&[]).ratio, None);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let stages = [Stage::Grid, Stage::Base, Stage::Fission, Stage::Warmstart];
    let cs: Vec<Checkpoint> = (0..200)
        .map(|_| costed(stages[rng.random_range(0..4)], rng.random_range(0.0..10.0)))
        .collect();
    let (mut g, mut f) = (0.0, 0.0);
    for c in &cs {
        match c.lineage.stage {
            Stage::Grid => g += c.epochs_consumed,
            Stage::Base | Stage::Fission => f += c.epochs_consumed,
            _ => {}
        }
    }
    let b = compute_budget(&cs);
    assert!((b.grid_total - g).abs() < 1e-9);
    assert!((b.fgg_total - f).abs() < 1e-9);
}

#[test]
fn csv_writers_emit_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let curve = LmcCurve {
        endpoints: ("a".into(), "b".into()),
        lambdas: vec![0.0, 1.0],
        scores: vec![0.5, 0.75],
        test_scores: Some(vec![0.25, 1.0]),
        metric: MetricKind::Accuracy,
    };
    let p = dir.path().join("lmc_curve.csv");
    write_lmc_csv(&curve, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "lambda,score,test_score\n0.0,0.5,0.25\n1.0,0.75,1.0\n");

    let b = compute_budget(&[costed(Stage::Grid, 4.0), costed(Stage::Base, 1.0)]);
    let p = dir.path().join("budget.csv");
    write_budget_csv(&b, &p).unwrap();
    assert_eq!(
        std::fs::read_to_string(&p).unwrap(),
        "item,epochs\ngrid,4.0\nbase,1.0\ngrid_total,4.0\nfgg_total,1.0\nfgg_over_grid,0.25\n"
    );
}
