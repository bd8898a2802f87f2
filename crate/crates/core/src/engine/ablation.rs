//! The comparative run grid: profile subsets, loss and module ablations,
//! latent sizes and data-scale variants.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalReport, Split};
use super::train::train;
use crate::config::HdysConfig;
use crate::datahub::{fifty_fifty, single, single_50, subset_dataset, Dataset, DatasetManifest};
use crate::error::{HdysError, Result};
use crate::util::sha256_hex;

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub run: String,
    pub variant: String,
    pub cfg: HdysConfig,
    pub manifest: DatasetManifest,
}

impl RunSpec {
    /// Identity of the effective training setup.
    pub fn key(&self) -> String {
        let text = format!("{}\n{}", self.cfg.to_text(), self.manifest.to_json());
        sha256_hex(text.as_bytes())
    }
}

/// Every run of the grid for one seed. Epochs come from `suite.epochs` when
/// it is positive.
pub fn ablation_grid(base: &HdysConfig, manifest: &DatasetManifest) -> Result<Vec<RunSpec>> {
    let mut cfg = base.clone();
    if base.suite.epochs > 0 {
        cfg.train.epochs = base.suite.epochs;
    }
    cfg.data.profiles.clear();
    let seed = cfg.train.seed;
    let ids: Vec<String> = manifest.profiles.iter().map(|p| p.id.clone()).collect();
    let only = |keep: &str| -> BTreeMap<String, f64> {
        ids.iter().map(|p| (p.clone(), if p == keep { 1.0 } else { 0.0 })).collect()
    };
    let drop = |gone: &str| -> BTreeMap<String, f64> { BTreeMap::from([(gone.to_string(), 0.0)]) };
    let run = |run: String, variant: &str, cfg: HdysConfig, manifest: DatasetManifest| RunSpec {
        run,
        variant: variant.into(),
        cfg,
        manifest,
    };
    let mut out = vec![run("full".into(), "full", cfg.clone(), manifest.clone())];
    for p in &ids {
        out.push(run(format!("only-{p}"), "single", cfg.clone(), subset_dataset(manifest, &only(p), seed)?));
    }
    for p in &ids {
        out.push(run(format!("without-{p}"), "drop", cfg.clone(), subset_dataset(manifest, &drop(p), seed)?));
    }
    for flag in ["no_align", "no_fdae", "no_temporal_refinement"] {
        let mut c = cfg.clone();
        c.set(&format!("ablation.{flag}"), "true")?;
        out.push(run(flag.into(), "flag", c, manifest.clone()));
    }
    for d in [32, 64, 128] {
        let mut c = cfg.clone();
        c.model.d = d;
        out.push(run(format!("d{d}"), "dim", c, manifest.clone()));
    }
    let t = &cfg.suite.scale_target;
    if manifest.profile(t).is_none() {
        return Err(HdysError::Config {
            key: "ablation.scale_target".into(),
            msg: format!("unknown profile `{t}`"),
        });
    }
    out.push(run(format!("single50-{t}"), "scale", cfg.clone(), single_50(manifest, t, seed)?));
    out.push(run(format!("fiftyfifty-{t}"), "scale", cfg.clone(), fifty_fifty(manifest, t, seed)?));
    out.push(run(format!("single-{t}"), "scale", cfg.clone(), single(manifest, t, seed)?));
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub run: String,
    pub variant: String,
    pub seed: u64,
    pub parameters: usize,
    pub epochs: usize,
    pub final_recon: f64,
    pub final_align: f64,
    /// Run whose trained model this row reuses, if the setup was identical.
    pub reused_from: Option<String>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<RunResult>,
}

impl AblationReport {
    pub fn find(&self, run: &str, seed: u64) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.run == run && r.seed == seed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,variant,seed,profile,representation,metric,value\n");
        for r in &self.runs {
            let head = format!("{},{},{}", r.run, r.variant, r.seed);
            s.push_str(&format!("{head},-,-,parameters,{}\n", r.parameters));
            for row in r.report.csv_rows() {
                s.push_str(&format!("{head},{}\n", row.join(",")));
            }
        }
        s
    }
}

fn execute(spec: &RunSpec, ds: &Dataset) -> Result<RunResult> {
    let view = ds.with_manifest(spec.manifest.clone());
    let out = train(&spec.cfg, &view)?;
    let report = evaluate(&out.model, &view, Split::Test, &[], true)?;
    let last = out.curve.last();
    Ok(RunResult {
        run: spec.run.clone(),
        variant: spec.variant.clone(),
        seed: spec.cfg.train.seed,
        parameters: out.model.parameter_count(),
        epochs: spec.cfg.train.epochs,
        final_recon: last.map_or(0.0, |e| e.recon),
        final_align: last.map_or(0.0, |e| e.align),
        reused_from: None,
        report,
    })
}

/// Runs the grid for every seed. Identical setups train once. `jobs > 1`
/// runs distinct setups on worker threads; results keep grid order.
pub fn ablation_suite(base: &HdysConfig, ds: &Dataset, seeds: &[u64], jobs: usize, progress: impl Fn(&str) + Sync) -> Result<AblationReport> {
    let mut specs = Vec::new();
    for &seed in seeds {
        let mut c = base.clone();
        c.train.seed = seed;
        specs.extend(ablation_grid(&c, &ds.manifest)?);
    }
    let mut first_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut unique = Vec::new();
    let mut source = Vec::with_capacity(specs.len());
    for (i, s) in specs.iter().enumerate() {
        let k = s.key();
        let u = *first_of.entry(k).or_insert_with(|| {
            unique.push(i);
            i
        });
        source.push(u);
    }
    let results: Mutex<BTreeMap<usize, Result<RunResult>>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let n = next.fetch_add(1, Ordering::SeqCst);
        let Some(&i) = unique.get(n) else { break };
        progress(&format!("run {} seed {}", specs[i].run, specs[i].cfg.train.seed));
        let r = execute(&specs[i], ds);
        results.lock().expect("poisoned").insert(i, r);
    };
    let jobs = jobs.clamp(1, unique.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut done = results.into_inner().expect("poisoned");
    let mut trained: BTreeMap<usize, RunResult> = BTreeMap::new();
    for i in unique {
        trained.insert(i, done.remove(&i).expect("every unique run executed")?);
    }
    let runs = specs
        .iter()
        .zip(&source)
        .enumerate()
        .map(|(i, (s, &u))| {
            let mut r = trained[&u].clone();
            r.run = s.run.clone();
            r.variant = s.variant.clone();
            if u != i {
                r.reused_from = Some(specs[u].run.clone());
            }
            r
        })
        .collect();
    Ok(AblationReport { runs })
}
