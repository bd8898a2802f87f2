//! The `hdysctl` command surface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::HdysConfig;
use crate::datahub::{
    default_data_dir, encode_record, generate_dataset, read_dataset, read_records, Dataset, DatasetManifest,
};
use crate::engine::{
    ablation_suite, curve_csv, evaluate, restrict_profiles, rollout_eval, train_with, AblationReport, EvalReport, Split,
};
use crate::error::{HdysError, Result};
use crate::model::Model;
use crate::util::{atomic_write, sha256_hex};

#[derive(Parser, Debug)]
#[command(name = "hdysctl", version, about = "Generate data, train, evaluate and ablate HDyS models")]
pub struct Cli {
    /// Config file (`key = value` lines); defaults to the desk preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset manifest; defaults to `<data root>/manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Training seed (data seed for `gen-data`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted-key override, applied after the config file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads for the ablation grid.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic corpus.
    GenData,
    /// Check every record against its manifest and summarize.
    Validate,
    /// Train a model.
    Train,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// k-step torque rollouts.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// The comparative run grid.
    Ablate {
        /// Comma-separated seeds; defaults to the training seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Regenerate one study's report bundle with pinned seeds.
    Reproduce {
        study: Study,
        /// Reuse a trained checkpoint instead of training (table2, rollout).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Study {
    #[value(name = "table1-analogue")]
    Table1,
    #[value(name = "table2-analogue")]
    Table2,
    #[value(name = "rollout-table")]
    RolloutTable,
}

/// Seeds, hashes and inputs behind an artifact.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub dataset_hash: String,
    pub checkpoint: Option<String>,
}

/// Hash over the manifest and every record it names, in manifest order.
pub fn dataset_hash(ds: &Dataset) -> Result<String> {
    let mut bytes = ds.manifest.to_json().into_bytes();
    for p in &ds.manifest.profiles {
        let split = &ds.manifest.splits[&p.id];
        for id in split.train.iter().chain(&split.test) {
            bytes.extend(sha256_hex(&encode_record(ds.get(id)?)).into_bytes());
        }
    }
    Ok(sha256_hex(&bytes))
}

fn effective_config(cli: &Cli) -> Result<HdysConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HdysConfig::load(p)?,
        None => HdysConfig::desk(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(s) = cli.seed {
        if matches!(cli.command, Command::GenData) {
            cfg.data.seed = s;
        } else {
            cfg.train.seed = s;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_root(cfg: &HdysConfig) -> PathBuf {
    if cfg.data.root.is_empty() {
        default_data_dir()
    } else {
        PathBuf::from(&cfg.data.root)
    }
}

fn load_data(cli: &Cli, cfg: &HdysConfig) -> Result<Dataset> {
    let root = data_root(cfg);
    let ds = match &cli.manifest {
        Some(m) => {
            if !root.join("manifest.json").exists() {
                return Err(HdysError::MissingDataset {
                    path: root.display().to_string(),
                });
            }
            read_records(&root, DatasetManifest::load(m)?)?
        }
        None => read_dataset(&root)?,
    };
    let m = restrict_profiles(&ds.manifest, &cfg.data.profiles)?;
    Ok(ds.with_manifest(m))
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| HdysError::Invalid("--out is required for this command".into()))?;
    std::fs::create_dir_all(&out)?;
    Ok(out)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    atomic_write(&dir.join(name), text.as_bytes())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(v)?)
}

fn freeze(dir: &Path, cfg: &HdysConfig, prov: &Provenance) -> Result<()> {
    write_text(dir, "config.txt", &cfg.to_text())?;
    write_json(dir, "provenance.json", prov)
}

fn provenance(command: &str, cfg: &HdysConfig, seeds: Vec<u64>, ds: &Dataset, checkpoint: Option<String>) -> Result<Provenance> {
    Ok(Provenance {
        command: command.into(),
        config_hash: cfg.hash(),
        seeds,
        data_seed: ds.manifest.global_seed,
        dataset_hash: dataset_hash(ds)?,
        checkpoint,
    })
}

fn train_into(cfg: &HdysConfig, ds: &Dataset, out: &Path, log: bool) -> Result<Model> {
    let outcome = train_with(cfg, ds, |e| {
        if log {
            eprintln!("epoch {:>4}  recon {:.5}  align {:.5}  total {:.6}", e.epoch, e.recon, e.align, e.total);
        }
    })?;
    write_text(out, "loss.csv", &curve_csv(&outcome.curve))?;
    outcome.model.save(out, "model")?;
    Ok(outcome.model)
}

fn checkpoint_id(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn eval_summary(r: &EvalReport) {
    for p in &r.profiles {
        let avg = p.avg();
        println!(
            "{}  {} avg {:.5}  best {} {:.5}  zero {:.5}",
            p.profile,
            p.headline,
            avg.get(&p.headline),
            p.best.representation,
            p.best.get(&p.headline),
            p.zero.get(&p.headline)
        );
    }
}

fn ablation_bundle(cfg: &HdysConfig, ds: &Dataset, seeds: &[u64], jobs: usize, out: &Path, command: &str) -> Result<AblationReport> {
    let report = ablation_suite(cfg, ds, seeds, jobs, |m| eprintln!("{m}"))?;
    write_text(out, "ablation.csv", &report.to_csv())?;
    write_json(out, "ablation.json", &report)?;
    freeze(out, cfg, &provenance(command, cfg, seeds.to_vec(), ds, None)?)?;
    Ok(report)
}

fn model_for(cfg: &HdysConfig, ds: &Dataset, checkpoint: Option<&PathBuf>, out: &Path) -> Result<(Model, String)> {
    match checkpoint {
        Some(p) => Ok((Model::load(p)?, checkpoint_id(p)?)),
        None => {
            let m = train_into(cfg, ds, out, true)?;
            Ok((m, checkpoint_id(&out.join("model.ckpt"))?))
        }
    }
}

/// Runs a parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let root = cli.out.clone().unwrap_or_else(|| data_root(&cfg));
            let manifest = match &cli.manifest {
                Some(m) => DatasetManifest::load(m)?,
                None => DatasetManifest::default_desk(cfg.data.seed),
            };
            let n = generate_dataset(&root, &manifest)?;
            println!("wrote {n} sequences to {}", root.display());
        }
        Command::Validate => {
            let ds = load_data(cli, &cfg)?;
            for p in &ds.manifest.profiles {
                let split = &ds.manifest.splits[&p.id];
                let frames: usize = split
                    .train
                    .iter()
                    .chain(&split.test)
                    .map(|id| ds.get(id).map(|r| r.frames()))
                    .sum::<Result<usize>>()?;
                println!(
                    "{}  train {:>4}  test {:>4}  frames {:>7}  channels {}",
                    p.id,
                    split.train.len(),
                    split.test.len(),
                    frames,
                    p.mask().names().join(",")
                );
            }
            println!("dataset {}", dataset_hash(&ds)?);
        }
        Command::Train => {
            let out = out_dir(cli)?;
            let ds = load_data(cli, &cfg)?;
            train_into(&cfg, &ds, &out, true)?;
            let ckpt = checkpoint_id(&out.join("model.ckpt"))?;
            freeze(&out, &cfg, &provenance("train", &cfg, vec![cfg.train.seed], &ds, Some(ckpt))?)?;
        }
        Command::Eval { checkpoint, split } => {
            let out = out_dir(cli)?;
            let model = Model::load(checkpoint)?;
            let ds = load_data(cli, &model.cfg)?;
            let report = evaluate(&model, &ds, Split::parse(split)?, &[], true)?;
            write_text(&out, "eval.csv", &report.to_csv())?;
            write_json(&out, "eval.json", &report)?;
            let prov = provenance("eval", &model.cfg, vec![model.cfg.train.seed], &ds, Some(checkpoint_id(checkpoint)?))?;
            freeze(&out, &model.cfg, &prov)?;
            eval_summary(&report);
        }
        Command::Rollout { checkpoint } => {
            let out = out_dir(cli)?;
            let mut model = Model::load(checkpoint)?;
            model.cfg.rollout = cfg.rollout.clone();
            let ds = load_data(cli, &model.cfg)?;
            let report = rollout_eval(&model, &ds, &cfg.rollout.k, &cfg.rollout.fps)?;
            write_text(&out, "rollout.csv", &report.to_csv())?;
            write_json(&out, "rollout.json", &report)?;
            let prov = provenance("rollout", &model.cfg, vec![model.cfg.train.seed], &ds, Some(checkpoint_id(checkpoint)?))?;
            freeze(&out, &model.cfg, &prov)?;
            print!("{}", report.to_csv());
        }
        Command::Ablate { seeds } => {
            let out = out_dir(cli)?;
            let ds = load_data(cli, &cfg)?;
            let seeds = if seeds.is_empty() { vec![cfg.train.seed] } else { seeds.clone() };
            ablation_bundle(&cfg, &ds, &seeds, cli.jobs, &out, "ablate")?;
        }
        Command::Reproduce { study, checkpoint } => {
            let out = out_dir(cli)?;
            let ds = load_data(cli, &cfg)?;
            let seeds = vec![cfg.train.seed];
            match study {
                Study::Table1 => {
                    ablation_bundle(&cfg, &ds, &seeds, cli.jobs, &out, "reproduce table1-analogue")?;
                }
                Study::Table2 => {
                    let (model, id) = model_for(&cfg, &ds, checkpoint.as_ref(), &out)?;
                    let report = evaluate(&model, &ds, Split::Test, &[], false)?;
                    write_text(&out, "table2.csv", &report.to_csv())?;
                    write_json(&out, "table2.json", &report)?;
                    freeze(&out, &model.cfg, &provenance("reproduce table2-analogue", &model.cfg, seeds, &ds, Some(id))?)?;
                    eval_summary(&report);
                }
                Study::RolloutTable => {
                    let (mut model, id) = model_for(&cfg, &ds, checkpoint.as_ref(), &out)?;
                    model.cfg.rollout = cfg.rollout.clone();
                    let report = rollout_eval(&model, &ds, &cfg.rollout.k, &cfg.rollout.fps)?;
                    write_text(&out, "rollout.csv", &report.to_csv())?;
                    write_json(&out, "rollout.json", &report)?;
                    freeze(&out, &model.cfg, &provenance("reproduce rollout-table", &model.cfg, seeds, &ds, Some(id))?)?;
                }
            }
        }
    }
    Ok(())
}

/// Parses `argv` and runs it. Returns the process exit code: 0 on success,
/// 1 on domain errors, 2 on usage and configuration errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
