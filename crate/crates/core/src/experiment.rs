//! End-to-end experiment: data, warm start, grid search, FGG, every soup variant and
//! the diagnostics, driven by one versioned JSON config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compute_budget, landscape_grid, lmc_sweep_with_test, ood_report, plane_basis, write_budget_csv,
    write_landscape, write_lmc_csv, write_report_csv, BudgetReport, Extent, LandscapeGrid, LmcCurve,
    ReportEntry, ReportTable,
};
use crate::data::{gen_task, load_csv, AugmentLevel, LabelColumn, LabeledDataset, SplitRole, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, ArchSpec, MetricKind, ParamVector};
use crate::optim::{AdamWConfig, CyclicalSchedule};
use crate::pipeline::{
    fgg_base_generate, fgg_fission, grid_generate, linear_probe_warmup, pretrain_source, Checkpoint, GridSpec,
    HyperConfig, RunFailure, ScheduleKind,
};
use crate::soup::{
    grouped_soup, hierarchical_soup, uniform_soup_result, Candidate, DatasetEvaluator, SoupMethod, SoupResult,
};
use crate::store::Store;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSource {
    Synthetic(TaskSpec),
    Csv(CsvTask),
}

/// Splits read from CSV files. Without a `source` file, pretraining uses `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTask {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub source: Option<PathBuf>,
    /// Named shifted test sets.
    #[serde(default)]
    pub ood: BTreeMap<String, PathBuf>,
    /// Column index or header name of the label.
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "label".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupConfig {
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FggConfig {
    pub lrs: Vec<f64>,
    pub augment: AugmentLevel,
    pub seed: u64,
    pub epochs_per_cycle: u64,
    pub n_collect: u32,
    /// Peak learning rate of each cycle.
    pub alpha1: f64,
    /// Learning rate at each collection point.
    pub alpha2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub lmc_points: usize,
    pub landscape_resolution: (usize, usize),
    pub landscape_margin: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            lmc_points: crate::analysis::DEFAULT_LMC_POINTS,
            landscape_resolution: crate::analysis::DEFAULT_RESOLUTION,
            landscape_margin: crate::analysis::DEFAULT_MARGIN,
        }
    }
}

/// Everything a run needs. Stored verbatim next to the run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: TaskSource,
    pub arch: ArchConfig,
    /// Selection and reporting metric; defaults to accuracy for smooth synthetic tasks
    /// and macro recall otherwise.
    #[serde(default)]
    pub metric: Option<MetricKind>,
    /// Seed for initialization and the warm start.
    pub seed: u64,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    pub pretrain: PretrainConfig,
    pub warmup: WarmupConfig,
    pub finetune: FinetuneConfig,
    pub grid: GridSpec,
    pub fgg: FggConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults around a synthetic task: 4 learning rates, 3 augmentation
    /// levels and 2 seeds for the grid; 4 base models with 3 collections each for FGG.
    pub fn desk(task: TaskSpec) -> ExperimentConfig {
        let lrs = vec![3e-2, 1e-2, 3e-3, 1e-3];
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: task.seed,
            task: TaskSource::Synthetic(task),
            arch: ArchConfig {
                hidden: vec![32],
                activation: Activation::Relu,
            },
            metric: None,
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            pretrain: PretrainConfig { lr: 3e-3, epochs: 20 },
            warmup: WarmupConfig { lr: 1e-2, epochs: 5 },
            finetune: FinetuneConfig { epochs: 20 },
            grid: GridSpec {
                lrs: lrs.clone(),
                augments: AugmentLevel::ALL.to_vec(),
                seeds: vec![0, 1],
            },
            fgg: FggConfig {
                lrs,
                augment: AugmentLevel::Heavy,
                seed: 0,
                epochs_per_cycle: 2,
                n_collect: 3,
                alpha1: 1e-2,
                alpha2: 1e-5,
            },
            analysis: AnalysisConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let version = raw.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(CONFIG_SCHEMA_VERSION as u64) {
            return Err(Error::Config(format!(
                "config schema_version must be {CONFIG_SCHEMA_VERSION}, found {}",
                version.map_or("none".to_string(), |v| v.to_string())
            )));
        }
        let cfg: ExperimentConfig = serde_json::from_value(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid.is_empty() {
            return bad("grid needs at least one lr, augment and seed".into());
        }
        if self.fgg.lrs.is_empty() {
            return bad("fgg.lrs is empty".into());
        }
        if self.fgg.n_collect == 0 {
            return bad("fgg.n_collect must be >= 1".into());
        }
        if self.fgg.epochs_per_cycle == 0 {
            return bad("fgg.epochs_per_cycle must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.analysis.lmc_points < 2 {
            return bad("analysis.lmc_points must be >= 2".into());
        }
        let (nx, ny) = self.analysis.landscape_resolution;
        if nx < 3 || ny < 3 {
            return bad("analysis.landscape_resolution must be at least 3x3".into());
        }
        CyclicalSchedule::new(2, self.fgg.alpha1, self.fgg.alpha2).map_err(|e| Error::Config(format!("fgg: {e}")))?;
        if let TaskSource::Synthetic(spec) = &self.task {
            spec.validate().map_err(|e| Error::Config(format!("task: {e}")))?;
        }
        self.optimizer.validate()
    }

    pub fn selection_metric(&self) -> MetricKind {
        self.metric.unwrap_or(match &self.task {
            TaskSource::Synthetic(s) if s.kind == TaskKind::Smooth => MetricKind::Accuracy,
            _ => MetricKind::MacroRecall,
        })
    }

    pub fn template(&self) -> HyperConfig {
        HyperConfig {
            lr: 0.0,
            seed: self.seed,
            augment: AugmentLevel::Minimal,
            epochs: self.finetune.epochs,
            warmup_epochs: self.warmup.epochs,
            batch_size: self.batch_size,
            schedule: ScheduleKind::Cosine,
            optimizer: self.optimizer,
        }
    }

    pub fn pretrain_config(&self) -> HyperConfig {
        HyperConfig {
            lr: self.pretrain.lr,
            epochs: self.pretrain.epochs,
            warmup_epochs: 0,
            ..self.template()
        }
    }

    pub fn warmup_config(&self) -> HyperConfig {
        HyperConfig {
            lr: self.warmup.lr,
            epochs: 0,
            ..self.template()
        }
    }

    /// Cyclical schedule for fission, with cycles measured in epochs of `train`.
    pub fn fission_schedule(&self, train: &LabeledDataset) -> Result<CyclicalSchedule> {
        let spe = train.len().div_ceil(self.batch_size) as u64;
        CyclicalSchedule::from_epochs(spe, self.fgg.epochs_per_cycle, self.fgg.alpha1, self.fgg.alpha2)
    }

    pub fn build_arch(&self, input: usize, classes: usize) -> Result<ArchSpec> {
        ArchSpec::mlp(input, &self.arch.hidden, classes, self.arch.activation)
    }
}

/// All data an experiment touches.
#[derive(Clone, Debug)]
pub struct Splits {
    pub source: LabeledDataset,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    pub ood: Vec<(String, LabeledDataset)>,
}

impl Splits {
    pub fn load(task: &TaskSource) -> Result<Splits> {
        match task {
            TaskSource::Synthetic(spec) => {
                let t = gen_task(spec)?;
                Ok(Splits {
                    source: t.source,
                    train: t.train,
                    val: t.val,
                    test: t.test,
                    ood: vec![("ood".into(), t.ood)],
                })
            }
            TaskSource::Csv(c) => {
                let label: LabelColumn = c.label.parse().unwrap_or_else(|e| match e {});
                let read = |p: &Path, role| -> Result<LabeledDataset> {
                    let mut ds = load_csv(p, &label)?;
                    ds.role = role;
                    Ok(ds)
                };
                let train = read(&c.train, SplitRole::Train)?;
                let mut s = Splits {
                    source: match &c.source {
                        Some(p) => read(p, SplitRole::Train)?,
                        None => train.clone(),
                    },
                    val: read(&c.val, SplitRole::Val)?,
                    test: read(&c.test, SplitRole::Test)?,
                    ood: c
                        .ood
                        .iter()
                        .map(|(name, p)| Ok((name.clone(), read(p, SplitRole::Ood)?)))
                        .collect::<Result<_>>()?,
                    train,
                };
                let classes = s.all().map(|d| d.class_count).max().unwrap_or(0);
                let dim = s.train.dim();
                for d in s.all_mut() {
                    if d.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            what: "csv feature columns",
                            expected: dim,
                            found: d.dim(),
                        });
                    }
                    d.class_count = classes;
                }
                Ok(s)
            }
        }
    }

    fn all(&self) -> impl Iterator<Item = &LabeledDataset> {
        [&self.source, &self.train, &self.val, &self.test]
            .into_iter()
            .chain(self.ood.iter().map(|o| &o.1))
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut LabeledDataset> {
        [&mut self.source, &mut self.train, &mut self.val, &mut self.test]
            .into_iter()
            .chain(self.ood.iter_mut().map(|o| &mut o.1))
    }
}

/// Method labels in report order.
pub const METHODS: [&str; 11] = [
    "gs_best",
    "uniform",
    "greedy",
    "fgg_best",
    "gou",
    "gog",
    "gs_hs_gou",
    "gs_hs_gog",
    "fgg_uniform",
    "fgg_greedy",
    "warmstart",
];

/// One merged or selected model produced by a method.
#[derive(Clone, Debug, Serialize)]
pub struct MethodResult {
    pub method: String,
    pub id: String,
    pub val_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soup: Option<SoupResult>,
    #[serde(skip)]
    pub params: ParamVector,
}

#[derive(Clone, Debug, Serialize)]
pub struct LmcPair {
    /// Which hyperparameter differs between the endpoints.
    pub varies: String,
    pub curve: LmcCurve,
    pub barrier: f64,
}

/// Barriers over every grid pair whose configs differ only in `varies`.
#[derive(Clone, Debug, Serialize)]
pub struct LmcSummary {
    pub varies: String,
    pub pairs: usize,
    pub mean_barrier: f64,
    pub max_barrier: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub metric: MetricKind,
    pub arch: ArchSpec,
    pub pretrained: Checkpoint,
    pub warmstart: Checkpoint,
    pub grid: Vec<Checkpoint>,
    pub bases: Vec<Checkpoint>,
    /// Fission checkpoints, one list per base in `bases` order.
    pub fissions: Vec<Vec<Checkpoint>>,
    pub failures: Vec<RunFailure>,
    pub methods: Vec<MethodResult>,
    pub report: ReportTable,
    pub lmc: Vec<LmcPair>,
    pub lmc_summary: Vec<LmcSummary>,
    pub landscape: Option<LandscapeGrid>,
    pub budget: BudgetReport,
}

impl ExperimentRun {
    pub fn method(&self, label: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == label)
    }

    /// In-distribution test score of a method.
    pub fn test_score(&self, label: &str) -> Option<f64> {
        self.report.cell(label, "id")
    }

    pub fn ood_score(&self, label: &str) -> Option<f64> {
        self.report.cell(label, "ood")
    }

    pub fn lmc_barrier(&self, varies: &str) -> Option<f64> {
        self.lmc.iter().find(|p| p.varies == varies).map(|p| p.barrier)
    }

    pub fn mean_barrier(&self, varies: &str) -> Option<f64> {
        self.lmc_summary.iter().find(|s| s.varies == varies).map(|s| s.mean_barrier)
    }

    pub fn all_checkpoints(&self) -> impl Iterator<Item = &Checkpoint> {
        [&self.pretrained, &self.warmstart]
            .into_iter()
            .chain(&self.grid)
            .chain(&self.bases)
            .chain(self.fissions.iter().flatten())
    }
}

/// Best checkpoint by validation score, ties to the smaller id.
fn best_of<'a>(cs: impl IntoIterator<Item = &'a Checkpoint>, metric: MetricKind) -> Option<&'a Checkpoint> {
    let score = |c: &Checkpoint| c.val_score(metric).unwrap_or(f64::NEG_INFINITY);
    cs.into_iter()
        .min_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.id.cmp(&b.id)))
}

fn ranked(cs: &[Checkpoint], metric: MetricKind) -> Vec<&Checkpoint> {
    let score = |c: &Checkpoint| c.val_score(metric).unwrap_or(f64::NEG_INFINITY);
    let mut out: Vec<&Checkpoint> = cs.iter().collect();
    out.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.id.cmp(&b.id)));
    out
}

fn selected(method: &str, c: &Checkpoint, metric: MetricKind) -> MethodResult {
    MethodResult {
        method: method.into(),
        id: c.id.clone(),
        val_score: c.val_score(metric).unwrap_or(f64::NAN),
        soup: None,
        params: c.params.clone(),
    }
}

fn souped(method: &str, s: SoupResult) -> MethodResult {
    MethodResult {
        method: method.into(),
        id: s.id.clone(),
        val_score: s.val_score,
        params: s.params.clone(),
        soup: Some(s),
    }
}

/// Grid model whose config equals `best`'s except in the field named by `vary`. Seed and
/// augmentation step to the neighbouring grid value; learning rate jumps to the far end.
fn lmc_partner<'a>(
    grid: &'a [Checkpoint],
    spec: &GridSpec,
    best: &Checkpoint,
    vary: &str,
) -> Option<&'a Checkpoint> {
    let b = best.config.as_ref()?;
    let target = match vary {
        "seed" => {
            let i = spec.seeds.iter().position(|&s| s == b.seed)?;
            let j = if i + 1 < spec.seeds.len() { i + 1 } else { i.checked_sub(1)? };
            HyperConfig { seed: spec.seeds[j], ..b.clone() }
        }
        "augment" => {
            let i = spec.augments.iter().position(|&a| a == b.augment)?;
            let j = if i + 1 < spec.augments.len() { i + 1 } else { i.checked_sub(1)? };
            HyperConfig { augment: spec.augments[j], ..b.clone() }
        }
        _ => {
            // the learning rate furthest from the anchor's on a log scale
            let dist = |l: f64| (l.ln() - b.lr.ln()).abs();
            let lr = spec
                .lrs
                .iter()
                .copied()
                .filter(|&l| l != b.lr)
                .max_by(|x, y| dist(*x).total_cmp(&dist(*y)))?;
            HyperConfig { lr, ..b.clone() }
        }
    };
    grid.iter().find(|c| c.config.as_ref() == Some(&target))
}

fn only_differs(a: &HyperConfig, b: &HyperConfig, vary: &str) -> bool {
    let same = |x: &HyperConfig| HyperConfig { lr: 0.0, seed: 0, augment: AugmentLevel::ALL[0], ..x.clone() };
    if same(a) != same(b) {
        return false;
    }
    let (lr, seed, aug) = (a.lr != b.lr, a.seed != b.seed, a.augment != b.augment);
    match vary {
        "seed" => seed && !lr && !aug,
        "augment" => aug && !lr && !seed,
        _ => lr && !seed && !aug,
    }
}

fn lmc_summaries(
    grid: &[Checkpoint],
    points: usize,
    val: &LabeledDataset,
    metric: MetricKind,
) -> Result<Vec<LmcSummary>> {
    let mut out = Vec::new();
    for vary in ["seed", "augment", "lr"] {
        let mut pairs = Vec::new();
        for (i, a) in grid.iter().enumerate() {
            for b in &grid[i + 1..] {
                if let (Some(ca), Some(cb)) = (&a.config, &b.config) {
                    if only_differs(ca, cb, vary) {
                        pairs.push((a, b));
                    }
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let barriers = pairs
            .par_iter()
            .map(|(a, b)| lmc_sweep_with_test(a, b, points, val, None, metric).map(|c| c.barrier()))
            .collect::<Result<Vec<f64>>>()?;
        out.push(LmcSummary {
            varies: vary.into(),
            pairs: barriers.len(),
            mean_barrier: barriers.iter().sum::<f64>() / barriers.len() as f64,
            max_barrier: barriers.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(out)
}

/// Run the whole pipeline in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let splits = Splits::load(&cfg.task)?;
    let metric = cfg.selection_metric();
    let arch = cfg.build_arch(splits.train.dim(), splits.train.class_count)?;
    let (train, val) = (&splits.train, &splits.val);

    let pretrained = pretrain_source(&arch, &splits.source, &cfg.pretrain_config())?;
    let mut warmstart = linear_probe_warmup(&pretrained, train, &cfg.warmup_config())?;
    warmstart.score_on(val)?;

    let template = cfg.template();
    let grid_out = grid_generate(&warmstart, &cfg.grid, train, val, &template)?;
    let base_out = fgg_base_generate(&warmstart, &cfg.fgg.lrs, cfg.fgg.augment, cfg.fgg.seed, train, val, &template)?;
    let mut failures = grid_out.failures;
    failures.extend(base_out.failures);
    let grid = grid_out.checkpoints;
    let bases = base_out.checkpoints;
    if grid.is_empty() || bases.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every {} run failed; first error: {}",
            if grid.is_empty() { "grid" } else { "base" },
            failures.first().map_or("none", |f| f.error.as_str())
        )));
    }

    let schedule = cfg.fission_schedule(train)?;
    let fission_out = bases
        .par_iter()
        .map(|b| fgg_fission(b, &schedule, cfg.fgg.n_collect, train, val))
        .collect::<Result<Vec<_>>>()?;
    let mut fissions = Vec::with_capacity(bases.len());
    for (b, f) in bases.iter().zip(fission_out) {
        if let Some(e) = f.error {
            failures.push(RunFailure {
                config: b.config.clone().expect("base has config"),
                error: format!("fission truncated after {} collections: {e}", f.checkpoints.len()),
            });
        }
        fissions.push(f.checkpoints);
    }

    let eval = DatasetEvaluator { arch: &arch, dataset: val, metric };
    let grid_cands: Vec<Candidate> = grid.iter().map(Candidate::from).collect();
    let fgg_all: Vec<Checkpoint> = bases.iter().chain(fissions.iter().flatten()).cloned().collect();
    let fgg_cands: Vec<Candidate> = fgg_all.iter().map(Candidate::from).collect();
    let groups: Vec<(Checkpoint, Vec<Checkpoint>)> = bases.iter().cloned().zip(fissions.iter().cloned()).collect();
    let mut by_lr: Vec<(String, Vec<Candidate>)> = Vec::new();
    for lr in &cfg.grid.lrs {
        let members: Vec<Candidate> = grid
            .iter()
            .filter(|c| c.config.as_ref().map(|h| h.lr) == Some(*lr))
            .map(Candidate::from)
            .collect();
        if !members.is_empty() {
            by_lr.push((format!("lr={lr:e}"), members));
        }
    }
    crate::soup::candidates_from(&grid)?;
    crate::soup::candidates_from(&fgg_all)?;

    let methods = vec![
        selected("gs_best", best_of(&grid, metric).expect("grid nonempty"), metric),
        souped("uniform", uniform_soup_result(&grid_cands, &eval)?),
        souped("greedy", crate::soup::greedy_soup(&grid_cands, &eval)?),
        selected("fgg_best", best_of(&fgg_all, metric).expect("bases nonempty"), metric),
        souped("gou", hierarchical_soup(&groups, SoupMethod::Gou, &eval)?),
        souped("gog", hierarchical_soup(&groups, SoupMethod::Gog, &eval)?),
        souped("gs_hs_gou", grouped_soup(&by_lr, SoupMethod::Gou, &eval)?),
        souped("gs_hs_gog", grouped_soup(&by_lr, SoupMethod::Gog, &eval)?),
        souped("fgg_uniform", uniform_soup_result(&fgg_cands, &eval)?),
        souped("fgg_greedy", crate::soup::greedy_soup(&fgg_cands, &eval)?),
        selected("warmstart", &warmstart, metric),
    ];

    let entries: Vec<ReportEntry> = methods
        .iter()
        .map(|m| ReportEntry {
            label: &m.method,
            id: &m.id,
            params: &m.params,
        })
        .collect();
    let ood_refs: Vec<(&str, &LabeledDataset)> = splits.ood.iter().map(|(n, d)| (n.as_str(), d)).collect();
    let report = ood_report(&entries, &arch, &splits.test, &ood_refs, metric)?;

    let best = best_of(&grid, metric).expect("grid nonempty");
    let mut lmc = Vec::new();
    for vary in ["seed", "augment", "lr"] {
        if let Some(partner) = lmc_partner(&grid, &cfg.grid, best, vary) {
            let curve = lmc_sweep_with_test(best, partner, cfg.analysis.lmc_points, val, Some(&splits.test), metric)?;
            lmc.push(LmcPair {
                varies: vary.into(),
                barrier: curve.barrier(),
                curve,
            });
        }
    }

    let lmc_summary = lmc_summaries(&grid, cfg.analysis.lmc_points, val, metric)?;

    let top = ranked(&grid, metric);
    let landscape = if top.len() >= 3 {
        match plane_basis(&top[0].params, &top[1].params, &top[2].params) {
            Ok(basis) => {
                let extent = Extent::around(&basis.anchor_coords, cfg.analysis.landscape_margin);
                let anchors = [top[0].id.clone(), top[1].id.clone(), top[2].id.clone()];
                Some(landscape_grid(
                    &basis,
                    anchors,
                    extent,
                    cfg.analysis.landscape_resolution,
                    &arch,
                    val,
                    metric,
                )?)
            }
            Err(Error::DegeneratePlane(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let budget = compute_budget(
        [&pretrained, &warmstart]
            .into_iter()
            .chain(&grid)
            .chain(&bases)
            .chain(fissions.iter().flatten()),
    );

    Ok(ExperimentRun {
        config: cfg.clone(),
        metric,
        arch,
        pretrained,
        warmstart,
        grid,
        bases,
        fissions,
        failures,
        methods,
        report,
        lmc,
        lmc_summary,
        landscape,
        budget,
    })
}

fn opt_f64(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

/// Write every CSV and JSON artifact of a run into `dir`. Outputs depend only on the
/// config, so repeated runs produce identical bytes.
pub fn write_artifacts(run: &ExperimentRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), run.config.to_json()?)?;
    write_report_csv(&run.report, &dir.join("report.csv"))?;
    write_budget_csv(&run.budget, &dir.join("budget.csv"))?;
    for pair in &run.lmc {
        write_lmc_csv(&pair.curve, &dir.join(format!("lmc_{}.csv", pair.varies)))?;
    }
    let mut w = csv::Writer::from_path(dir.join("lmc_summary.csv"))?;
    w.write_record(["varies", "pairs", "mean_barrier", "max_barrier"])?;
    for s in &run.lmc_summary {
        w.write_record([
            s.varies.clone(),
            s.pairs.to_string(),
            format!("{:?}", s.mean_barrier),
            format!("{:?}", s.max_barrier),
        ])?;
    }
    w.flush()?;
    if let Some(g) = &run.landscape {
        write_landscape(g, &dir.join("landscape.csv"), &dir.join("landscape_meta.json"))?;
    }

    let mut w = csv::Writer::from_path(dir.join("checkpoints.csv"))?;
    w.write_record([
        "id",
        "stage",
        "base_id",
        "lr",
        "augment",
        "seed",
        "cycle_index",
        "epochs_consumed",
        &format!("val_{}", run.metric),
    ])?;
    for c in run.all_checkpoints() {
        let h = c.config.as_ref();
        w.write_record([
            c.id.clone(),
            c.stage().to_string(),
            c.lineage.base_id.clone().unwrap_or_default(),
            h.map_or_else(String::new, |h| format!("{:?}", h.lr)),
            h.map_or_else(String::new, |h| h.augment.as_str().to_string()),
            h.map_or_else(String::new, |h| h.seed.to_string()),
            c.lineage.cycle_index.map_or_else(String::new, |i| i.to_string()),
            format!("{:?}", c.epochs_consumed),
            opt_f64(c.val_score(run.metric)),
        ])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Methods<'a> {
        metric: MetricKind,
        methods: &'a [MethodResult],
        lmc: &'a [LmcPair],
        lmc_summary: &'a [LmcSummary],
        failures: &'a [RunFailure],
    }
    let doc = Methods {
        metric: run.metric,
        methods: &run.methods,
        lmc: &run.lmc,
        lmc_summary: &run.lmc_summary,
        failures: &run.failures,
    };
    std::fs::write(dir.join("methods.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// Run, save every checkpoint and soup into the store, and write the artifacts under
/// `experiments/<name>/`.
pub fn run_and_persist(store: &Store, name: &str, cfg: &ExperimentConfig) -> Result<(ExperimentRun, PathBuf)> {
    let dir = store.experiment_dir(name)?;
    let run = run_experiment(cfg)?;
    for c in run.all_checkpoints() {
        store.save_checkpoint(c)?;
    }
    let root = run.warmstart.lineage.root_id.clone();
    for m in &run.methods {
        if let Some(s) = &m.soup {
            store.save_soup(s, &run.arch, root.clone())?;
        }
    }
    write_artifacts(&run, &dir)?;
    Ok((run, dir))
}
