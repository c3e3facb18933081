//! `weightsoup`: run the fine-tuning, fission and souping pipeline step by step or end
//! to end against an on-disk checkpoint store.
//!
//! Every command prints one JSON summary line on stdout. Errors go to stderr with a
//! nonzero exit status.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use weightsoup::analysis::{
    compute_budget, landscape_grid, lmc_sweep_with_test, ood_report, plane_basis, write_budget_csv,
    write_landscape, write_lmc_csv, write_report_csv, Extent, ReportEntry,
};
use weightsoup::data::{LabeledDataset, TaskSpec};
use weightsoup::experiment::{run_and_persist, ExperimentConfig, Splits};
use weightsoup::nn::{evaluate, ArchSpec, MetricKind};
use weightsoup::pipeline::{
    fgg_base_generate, fgg_fission, grid_generate, linear_probe_warmup, pretrain_source, Checkpoint,
    GridOutcome, Stage,
};
use weightsoup::soup::{
    candidates_from, greedy_soup, hierarchical_soup, uniform_soup_result, DatasetEvaluator, SoupMethod,
};
use weightsoup::store::{Store, STORE_ENV};
use weightsoup::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "weightsoup", version, about = "Fine-tune, fission and soup small MLPs")]
struct Cli {
    /// Store root; falls back to the environment variable.
    #[arg(long, global = true, env = STORE_ENV)]
    store: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a default experiment config as JSON.
    Init {
        #[arg(long, value_enum, default_value_t = TaskArg::Rough)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a fresh network on the source split.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Linear-probe warm start from a pretrained checkpoint.
    Warmup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        from: String,
    },
    /// Fine-tune every grid cell from a warm start.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        from: String,
    },
    /// Fine-tune one base model per fission learning rate.
    FggBase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        from: String,
    },
    /// Continue base models under the cyclical schedule and collect checkpoints.
    Fission {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "base", required = true, num_args = 1..)]
        bases: Vec<String>,
    },
    /// Merge saved checkpoints. For gou and gog, `--ids` names base models; their
    /// fission checkpoints are found in the store.
    Soup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, required = true, num_args = 1..)]
        ids: Vec<String>,
    },
    /// Score one checkpoint on a split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        id: String,
        /// val, test, or the name of a shifted split.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Interpolate between two checkpoints.
    Lmc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "cli")]
        experiment: String,
    },
    /// Error over the plane through three checkpoints; the first is the origin.
    Landscape {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 3, required = true)]
        ids: Vec<String>,
        #[arg(long, default_value = "cli")]
        experiment: String,
    },
    /// Test and shifted-split scores for a list of checkpoints.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        ids: Vec<String>,
        #[arg(long, default_value = "cli")]
        experiment: String,
    },
    /// Training epochs per stage over the given checkpoints, or the whole store.
    Budget {
        #[arg(long, num_args = 1..)]
        ids: Vec<String>,
        #[arg(long, default_value = "cli")]
        experiment: String,
    },
    /// Run the whole pipeline and write every artifact.
    RunExperiment {
        config: PathBuf,
        /// Experiment directory name; defaults to the config file stem.
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Rough,
    Smooth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Uniform,
    Greedy,
    Gou,
    Gog,
}

struct Ctx {
    cfg: ExperimentConfig,
    splits: Splits,
    metric: MetricKind,
}

impl Ctx {
    fn load(path: &Path) -> Result<Ctx> {
        let cfg = ExperimentConfig::load(path)?;
        let splits = Splits::load(&cfg.task)?;
        let metric = cfg.selection_metric();
        Ok(Ctx { cfg, splits, metric })
    }

    fn arch(&self) -> Result<ArchSpec> {
        self.cfg.build_arch(self.splits.train.dim(), self.splits.train.class_count)
    }

    fn split(&self, name: &str) -> Result<&LabeledDataset> {
        match name {
            "val" => Ok(&self.splits.val),
            "test" => Ok(&self.splits.test),
            "train" => Ok(&self.splits.train),
            other => self
                .splits
                .ood
                .iter()
                .find(|(n, _)| n == other)
                .map(|(_, d)| d)
                .ok_or_else(|| Error::InvalidArgument(format!("no split named {other:?}"))),
        }
    }
}

fn load_all(store: &Store, ids: &[String]) -> Result<Vec<Checkpoint>> {
    ids.iter().map(|id| store.load_checkpoint(id)).collect()
}

fn save_outcome(store: &Store, out: &GridOutcome) -> Result<Value> {
    for c in &out.checkpoints {
        store.save_checkpoint(c)?;
    }
    let failures: Vec<Value> = out
        .failures
        .iter()
        .map(|f| json!({ "lr": f.config.lr, "error": f.error }))
        .collect();
    Ok(json!({
        "ids": out.checkpoints.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
        "failures": failures,
    }))
}

fn fissions_of(store: &Store, base: &str) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for id in store.list_checkpoints()? {
        let m = store.load_manifest(&id)?;
        if m.lineage.stage == Stage::Fission && m.lineage.base_id.as_deref() == Some(base) {
            out.push(store.load_checkpoint(&id)?);
        }
    }
    out.sort_by_key(|c| c.lineage.cycle_index);
    Ok(out)
}

fn artifact_path(store: &Store, experiment: &str, file: &str) -> Result<PathBuf> {
    let dir = store.experiment_dir(experiment)?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir.join(file))
}

fn run(cli: Cli) -> Result<Value> {
    let store = || Store::resolve(cli.store.as_deref());
    match cli.command {
        Command::Init { task, seed } => {
            let spec = match task {
                TaskArg::Rough => TaskSpec::rough(seed),
                TaskArg::Smooth => TaskSpec::smooth(seed),
            };
            print!("{}", ExperimentConfig::desk(spec).to_json()?);
            Ok(Value::Null)
        }
        Command::Pretrain { config } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let c = pretrain_source(&ctx.arch()?, &ctx.splits.source, &ctx.cfg.pretrain_config())?;
            store.save_checkpoint(&c)?;
            Ok(json!({ "command": "pretrain", "id": c.id, "epochs": c.epochs_consumed }))
        }
        Command::Warmup { config, from } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let pre = store.load_checkpoint(&from)?;
            let mut c = linear_probe_warmup(&pre, &ctx.splits.train, &ctx.cfg.warmup_config())?;
            c.score_on(&ctx.splits.val)?;
            store.save_checkpoint(&c)?;
            Ok(json!({
                "command": "warmup",
                "id": c.id,
                "val": c.val_score(ctx.metric),
                "metric": ctx.metric,
            }))
        }
        Command::Grid { config, from } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let warm = store.load_checkpoint(&from)?;
            let out = grid_generate(
                &warm,
                &ctx.cfg.grid,
                &ctx.splits.train,
                &ctx.splits.val,
                &ctx.cfg.template(),
            )?;
            let mut v = save_outcome(&store, &out)?;
            v["command"] = "grid".into();
            Ok(v)
        }
        Command::FggBase { config, from } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let warm = store.load_checkpoint(&from)?;
            let f = &ctx.cfg.fgg;
            let out = fgg_base_generate(
                &warm,
                &f.lrs,
                f.augment,
                f.seed,
                &ctx.splits.train,
                &ctx.splits.val,
                &ctx.cfg.template(),
            )?;
            let mut v = save_outcome(&store, &out)?;
            v["command"] = "fgg-base".into();
            Ok(v)
        }
        Command::Fission { config, bases } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let schedule = ctx.cfg.fission_schedule(&ctx.splits.train)?;
            let mut runs = Vec::new();
            for base in load_all(&store, &bases)? {
                let out = fgg_fission(&base, &schedule, ctx.cfg.fgg.n_collect, &ctx.splits.train, &ctx.splits.val)?;
                for c in &out.checkpoints {
                    store.save_checkpoint(c)?;
                }
                runs.push(json!({
                    "base": base.id,
                    "ids": out.checkpoints.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
                    "capture_steps": out.capture_steps,
                    "total_steps": out.total_steps,
                    "truncated": out.truncated,
                    "error": out.error,
                }));
            }
            Ok(json!({ "command": "fission", "runs": runs }))
        }
        Command::Soup { config, method, ids } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let arch = ctx.arch()?;
            let eval = DatasetEvaluator {
                arch: &arch,
                dataset: &ctx.splits.val,
                metric: ctx.metric,
            };
            let loaded = load_all(&store, &ids)?;
            let root = loaded.first().and_then(|c| c.lineage.root_id.clone());
            let soup = match method {
                MethodArg::Uniform | MethodArg::Greedy => {
                    let cands = candidates_from(&loaded)?;
                    if matches!(method, MethodArg::Uniform) {
                        uniform_soup_result(&cands, &eval)?
                    } else {
                        greedy_soup(&cands, &eval)?
                    }
                }
                MethodArg::Gou | MethodArg::Gog => {
                    let mut groups = Vec::with_capacity(loaded.len());
                    for b in loaded {
                        let f = fissions_of(&store, &b.id)?;
                        groups.push((b, f));
                    }
                    let m = if matches!(method, MethodArg::Gou) { SoupMethod::Gou } else { SoupMethod::Gog };
                    hierarchical_soup(&groups, m, &eval)?
                }
            };
            store.save_soup(&soup, &arch, root)?;
            Ok(json!({
                "command": "soup",
                "method": soup.method.as_str(),
                "id": soup.id,
                "members": soup.members,
                "val": soup.val_score,
                "metric": ctx.metric,
            }))
        }
        Command::Eval { config, id, split } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let c = store.load_checkpoint(&id)?;
            let ds = ctx.split(&split)?;
            let mut scores = serde_json::Map::new();
            for m in MetricKind::ALL {
                let v = match evaluate(&c.params, &c.arch, ds, m) {
                    Ok(s) => json!(s),
                    Err(Error::UndefinedMetric { .. }) => Value::Null,
                    Err(e) => return Err(e),
                };
                scores.insert(m.to_string(), v);
            }
            Ok(json!({ "command": "eval", "id": id, "split": split, "scores": scores }))
        }
        Command::Lmc { config, a, b, points, experiment } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let (ca, cb) = (store.load_checkpoint(&a)?, store.load_checkpoint(&b)?);
            let n = points.unwrap_or(ctx.cfg.analysis.lmc_points);
            let curve = lmc_sweep_with_test(&ca, &cb, n, &ctx.splits.val, Some(&ctx.splits.test), ctx.metric)?;
            let path = artifact_path(&store, &experiment, &format!("lmc_{a}_{b}.csv"))?;
            write_lmc_csv(&curve, &path)?;
            Ok(json!({ "command": "lmc", "barrier": curve.barrier(), "csv": path }))
        }
        Command::Landscape { config, ids, experiment } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let cs = load_all(&store, &ids)?;
            let basis = plane_basis(&cs[0].params, &cs[1].params, &cs[2].params)?;
            let extent = Extent::around(&basis.anchor_coords, ctx.cfg.analysis.landscape_margin);
            let grid = landscape_grid(
                &basis,
                [ids[0].clone(), ids[1].clone(), ids[2].clone()],
                extent,
                ctx.cfg.analysis.landscape_resolution,
                &cs[0].arch,
                &ctx.splits.val,
                ctx.metric,
            )?;
            let csv = artifact_path(&store, &experiment, "landscape.csv")?;
            let meta = csv.with_file_name("landscape_meta.json");
            write_landscape(&grid, &csv, &meta)?;
            Ok(json!({ "command": "landscape", "local_minima": grid.local_minima(), "csv": csv, "meta": meta }))
        }
        Command::Report { config, ids, experiment } => {
            let (store, ctx) = (store()?, Ctx::load(&config)?);
            let cs = load_all(&store, &ids)?;
            let arch = &cs[0].arch;
            let entries: Vec<ReportEntry> = cs
                .iter()
                .map(|c| ReportEntry {
                    label: &c.id,
                    id: &c.id,
                    params: &c.params,
                })
                .collect();
            let ood: Vec<(&str, &LabeledDataset)> = ctx.splits.ood.iter().map(|(n, d)| (n.as_str(), d)).collect();
            let table = ood_report(&entries, arch, &ctx.splits.test, &ood, ctx.metric)?;
            let path = artifact_path(&store, &experiment, "report.csv")?;
            write_report_csv(&table, &path)?;
            Ok(json!({ "command": "report", "rows": table.rows.len(), "csv": path }))
        }
        Command::Budget { ids, experiment } => {
            let store = store()?;
            let ids = if ids.is_empty() { store.list_checkpoints()? } else { ids };
            let cs = load_all(&store, &ids)?;
            let report = compute_budget(&cs);
            let path = artifact_path(&store, &experiment, "budget.csv")?;
            write_budget_csv(&report, &path)?;
            Ok(json!({
                "command": "budget",
                "grid_total": report.grid_total,
                "fgg_total": report.fgg_total,
                "ratio": report.ratio,
                "csv": path,
            }))
        }
        Command::RunExperiment { config, name } => {
            let store = store()?;
            let cfg = ExperimentConfig::load(&config)?;
            let name = match name {
                Some(n) => n,
                None => config
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("experiment")
                    .to_string(),
            };
            let (run, dir) = run_and_persist(&store, &name, &cfg)?;
            let scores: serde_json::Map<String, Value> = run
                .methods
                .iter()
                .map(|m| (m.method.clone(), json!(run.test_score(&m.method))))
                .collect();
            Ok(json!({
                "command": "run-experiment",
                "dir": dir,
                "metric": run.metric,
                "test": scores,
                "failures": run.failures.len(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
