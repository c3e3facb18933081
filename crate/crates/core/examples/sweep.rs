//! Run the desk experiment over several seeds on both synthetic tasks and print the
//! per-seed comparisons the acceptance suite checks.
//!
//! cargo run --release -p weightsoup --example sweep -- [seeds]
//!
//! `START` shifts the first seed, for checking a calibration on held-out seeds.

use std::time::Instant;

use serde_json::Value;
use weightsoup::data::TaskSpec;
use weightsoup::experiment::{run_experiment, ExperimentConfig};

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Desk config with optional JSON patches from `PATCH` (all tasks) and
/// `PATCH_ROUGH` / `PATCH_SMOOTH`.
fn config(name: &str, spec: TaskSpec) -> ExperimentConfig {
    let mut v = serde_json::to_value(ExperimentConfig::desk(spec)).unwrap();
    for var in ["PATCH".to_string(), format!("PATCH_{}", name.to_uppercase())] {
        if let Ok(p) = std::env::var(&var) {
            merge(&mut v, &serde_json::from_str(&p).expect("patch is JSON"));
        }
    }
    serde_json::from_value(v).unwrap()
}

fn main() -> weightsoup::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let start: u64 = std::env::var("START").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let only = std::env::var("ONLY").ok();
    for (name, make) in [("rough", TaskSpec::rough as fn(u64) -> TaskSpec), ("smooth", TaskSpec::smooth)] {
        if only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let mut tally = [0usize; 6];
        let t0 = Instant::now();
        for seed in start..start + n {
            let run = run_experiment(&config(name, make(seed)))?;
            let s = |m: &str| run.test_score(m).unwrap_or(f64::NAN);
            let o = |m: &str| run.ood_score(m).unwrap_or(f64::NAN);
            let minima = run.landscape.as_ref().map_or(0, |g| g.local_minima());
            let (bs, bl) = (run.mean_barrier("seed").unwrap_or(f64::NAN), run.mean_barrier("lr").unwrap_or(f64::NAN));
            println!(
                "{name} seed={seed} gs_best={:.4} uni={:.4} greedy={:.4} fgg_best={:.4} gou={:.4} gog={:.4} | ood greedy={:.4} gou={:.4} gog={:.4} | minima={minima} | barrier seed={bs:.4} lr={bl:.4} | warm={:.4}",
                s("gs_best"), s("uniform"), s("greedy"), s("fgg_best"), s("gou"), s("gog"),
                o("greedy"), o("gou"), o("gog"), s("warmstart"),
            );
            tally[0] += (s("gog") >= s("uniform")) as usize;
            tally[1] += (s("gog") >= s("greedy")) as usize;
            tally[2] += ((s("gou") - s("greedy")).abs() <= 0.01 && (s("gog") - s("greedy")).abs() <= 0.01) as usize;
            tally[3] += (o("gou").max(o("gog")) >= o("greedy")) as usize;
            tally[4] += (bs < bl) as usize;
            tally[5] += minima;
        }
        println!(
            "{name}: gog>=uni {}/{n}  gog>=greedy {}/{n}  hs~greedy(1pp) {}/{n}  ood {}/{n}  lmc {}/{n}  minima total {}  [{:.1}s]",
            tally[0], tally[1], tally[2], tally[3], tally[4], tally[5], t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
