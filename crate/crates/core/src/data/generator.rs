//! Seeded synthetic classification tasks.
//!
//! Every task is a Gaussian mixture: each class owns one or more clusters with their own
//! means and per-dimension spreads. A `smooth` task is a balanced, clean mixture with
//! one isotropic cluster per class and no shift between splits. A `rough` task layers
//! four complications on top: heterogeneous clusters, a shifted pretraining source,
//! class imbalance with label noise, and a train-to-test covariate shift.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, SplitRole};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Smooth,
    Rough,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub seed: u64,
    pub dims: usize,
    pub class_count: usize,
    /// Rows in train + val + test (split 80/10/10).
    pub n_samples: usize,
    /// Majority-to-minority class ratio; classes decay geometrically between the two.
    pub imbalance_ratio: f64,
    pub label_noise_rate: f64,
    /// Log-scale spread of per-cluster standard deviations.
    pub cluster_heterogeneity: f64,
    /// Length of the mean displacement applied to test (and OOD) rows.
    pub shift_magnitude: f64,
    pub clusters_per_class: usize,
    /// Standard deviation of cluster means around the origin.
    pub class_separation: f64,
    /// Mean displacement of the pretraining source relative to the target.
    pub source_shift: f64,
    /// Extra displacement of the OOD split on top of the test shift.
    pub ood_shift: f64,
    pub n_source: usize,
    pub n_ood: usize,
}

impl TaskSpec {
    pub fn smooth(seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::Smooth,
            seed,
            dims: 8,
            class_count: 3,
            n_samples: 1200,
            imbalance_ratio: 1.0,
            label_noise_rate: 0.0,
            cluster_heterogeneity: 0.0,
            shift_magnitude: 0.0,
            clusters_per_class: 1,
            class_separation: 2.0,
            source_shift: 0.5,
            ood_shift: 1.0,
            n_source: 1200,
            n_ood: 240,
        }
    }

    pub fn rough(seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::Rough,
            seed,
            dims: 8,
            class_count: 3,
            n_samples: 6000,
            imbalance_ratio: 3.0,
            label_noise_rate: 0.2,
            cluster_heterogeneity: 0.8,
            shift_magnitude: 1.0,
            clusters_per_class: 4,
            class_separation: 1.5,
            source_shift: 1.5,
            ood_shift: 2.5,
            n_source: 1200,
            n_ood: 1200,
        }
    }

    pub fn task_id(&self) -> String {
        let kind = match self.kind {
            TaskKind::Smooth => "smooth",
            TaskKind::Rough => "rough",
        };
        format!("{kind}-s{}", self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dims == 0 {
            return bad("dims must be >= 1".into());
        }
        if self.class_count < 2 {
            return bad(format!("need at least 2 classes, got {}", self.class_count));
        }
        if self.n_samples < self.class_count {
            return bad(format!(
                "degenerate task: {} samples for {} classes",
                self.n_samples, self.class_count
            ));
        }
        let (n_train, n_val, n_test) = self.split_sizes();
        if n_train == 0 || n_val == 0 || n_test == 0 || self.n_source == 0 || self.n_ood == 0 {
            return bad(format!("{} samples leave an empty split", self.n_samples));
        }
        if self.clusters_per_class == 0 {
            return bad("clusters_per_class must be >= 1".into());
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return bad(format!("imbalance_ratio must be >= 1, got {}", self.imbalance_ratio));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return bad(format!("label_noise_rate must lie in [0, 1), got {}", self.label_noise_rate));
        }
        for (name, v) in [
            ("cluster_heterogeneity", self.cluster_heterogeneity),
            ("shift_magnitude", self.shift_magnitude),
            ("class_separation", self.class_separation),
            ("source_shift", self.source_shift),
            ("ood_shift", self.ood_shift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative finite number, got {v}"));
            }
        }
        if self.kind == TaskKind::Smooth
            && (self.imbalance_ratio != 1.0 || self.label_noise_rate != 0.0 || self.shift_magnitude != 0.0)
        {
            return bad(
                "smooth tasks require imbalance_ratio = 1, label_noise_rate = 0 and shift_magnitude = 0"
                    .into(),
            );
        }
        Ok(())
    }

    /// (train, val, test) row counts: val and test get `floor(N / 10)` each.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n_val = self.n_samples / 10;
        let n_test = self.n_samples / 10;
        (self.n_samples.saturating_sub(n_val + n_test), n_val, n_test)
    }

    /// Class probabilities, geometric from 1 down to `1 / imbalance_ratio`.
    pub fn class_priors(&self) -> Vec<f64> {
        let c = self.class_count;
        let weights: Vec<f64> = (0..c)
            .map(|k| self.imbalance_ratio.powf(-(k as f64) / (c - 1) as f64))
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }
}

/// All datasets produced for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub source: LabeledDataset,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    pub ood: LabeledDataset,
}

/// Exact per-class counts by the largest-remainder rule; ties go to the lower class.
pub fn class_quotas(n: usize, priors: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = priors.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

// independent random streams derived from the task seed
const STREAM_STRUCTURE: u64 = 1;
const STREAM_TRAIN: u64 = 10;
const STREAM_VAL: u64 = 11;
const STREAM_TEST: u64 = 12;
const STREAM_OOD: u64 = 13;
const STREAM_SOURCE: u64 = 14;
const NOISE_OFFSET: u64 = 100;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Mixture {
    /// `means[class][cluster]`
    means: Vec<Vec<Vec<f64>>>,
    stds: Vec<Vec<Vec<f64>>>,
    test_shift: Vec<f64>,
    ood_shift: Vec<f64>,
    source_shift: Vec<f64>,
}

fn random_direction(rng: &mut ChaCha8Rng, dims: usize, length: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.iter().map(|x| x / norm * length).collect()
}

impl Mixture {
    fn draw(spec: &TaskSpec) -> Self {
        let mut rng = stream(spec.seed, STREAM_STRUCTURE);
        let d = spec.dims;
        let mut means = Vec::with_capacity(spec.class_count);
        let mut stds = Vec::with_capacity(spec.class_count);
        for _ in 0..spec.class_count {
            let mut class_means = Vec::new();
            let mut class_stds = Vec::new();
            for _ in 0..spec.clusters_per_class {
                class_means.push(
                    (0..d)
                        .map(|_| spec.class_separation * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                );
                class_stds.push(
                    (0..d)
                        .map(|_| {
                            (spec.cluster_heterogeneity * rng.sample::<f64, _>(StandardNormal)).exp()
                        })
                        .collect(),
                );
            }
            means.push(class_means);
            stds.push(class_stds);
        }
        let test_shift = random_direction(&mut rng, d, spec.shift_magnitude);
        let extra = random_direction(&mut rng, d, spec.ood_shift);
        let ood_shift = test_shift.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let source_shift = random_direction(&mut rng, d, spec.source_shift);
        Mixture {
            means,
            stds,
            test_shift,
            ood_shift,
            source_shift,
        }
    }
}

struct Population<'a> {
    spec: &'a TaskSpec,
    mixture: &'a Mixture,
}

impl Population<'_> {
    #[allow(clippy::too_many_arguments)]
    fn sample(
        &self,
        n: usize,
        priors: &[f64],
        shift: &[f64],
        noise_rate: f64,
        stream_id: u64,
        first_row_id: u64,
        role: SplitRole,
    ) -> Result<LabeledDataset> {
        let spec = self.spec;
        let mut rng = stream(spec.seed, stream_id);
        let mut noise_rng = stream(spec.seed, stream_id + NOISE_OFFSET);

        let quotas = class_quotas(n, priors);
        let mut clean: Vec<usize> = quotas
            .iter()
            .enumerate()
            .flat_map(|(c, &count)| std::iter::repeat_n(c, count))
            .collect();
        clean.shuffle(&mut rng);

        let d = spec.dims;
        let mut features = Array2::zeros((n, d));
        for (row, &c) in clean.iter().enumerate() {
            let k = rng.random_range(0..spec.clusters_per_class);
            let mean = &self.mixture.means[c][k];
            let std = &self.mixture.stds[c][k];
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = mean[j] + std[j] * z + shift[j];
            }
        }

        // draw the same number of variates whatever the rate, so noisy and clean
        // versions of a task share every other random choice
        let labels = clean
            .iter()
            .map(|&c| {
                let u: f64 = noise_rng.random();
                let offset = noise_rng.random_range(1..spec.class_count);
                if u < noise_rate {
                    (c + offset) % spec.class_count
                } else {
                    c
                }
            })
            .collect();

        let row_ids = (first_row_id..first_row_id + n as u64).collect();
        LabeledDataset::with_row_ids(features, labels, spec.class_count, role, spec.task_id(), row_ids)
    }
}

pub fn gen_task(spec: &TaskSpec) -> Result<TaskData> {
    spec.validate()?;
    let mixture = Mixture::draw(spec);
    let pop = Population {
        spec,
        mixture: &mixture,
    };
    let (n_train, n_val, n_test) = spec.split_sizes();
    let priors = spec.class_priors();
    let mut source_priors = priors.clone();
    source_priors.reverse();
    let zero = vec![0.0; spec.dims];
    let noise = spec.label_noise_rate;

    let mut next_id = 0u64;
    let mut ids = |n: usize| {
        let start = next_id;
        next_id += n as u64;
        start
    };
    let train = pop.sample(n_train, &priors, &zero, noise, STREAM_TRAIN, ids(n_train), SplitRole::Train)?;
    let val = pop.sample(n_val, &priors, &zero, noise, STREAM_VAL, ids(n_val), SplitRole::Val)?;
    let test = pop.sample(n_test, &priors, &mixture.test_shift, noise, STREAM_TEST, ids(n_test), SplitRole::Test)?;
    let ood = pop.sample(
        spec.n_ood,
        &priors,
        &mixture.ood_shift,
        noise,
        STREAM_OOD,
        ids(spec.n_ood),
        SplitRole::Ood,
    )?;
    let source = pop.sample(
        spec.n_source,
        &source_priors,
        &mixture.source_shift,
        0.0,
        STREAM_SOURCE,
        ids(spec.n_source),
        SplitRole::Train,
    )?;
    Ok(TaskData {
        source,
        train,
        val,
        test,
        ood,
    })
}
