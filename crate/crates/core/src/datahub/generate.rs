//! Synthetic sequence generation and on-disk dataset layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/trees/T1.json, T2.json
//! <root>/<profile>/<sequence id>.rec
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bodies::{by_name, BodyModel};
use super::manifest::{parse_sequence_id, DatasetManifest};
use super::motion::MotionSpec;
use super::profile::DomainProfile;
use super::record::{read_record, write_record};
use crate::error::{HdysError, Result};
use crate::kinrep::{
    attach_dynamics, build_representations, ChannelMask, DynamicsRequest, Jitter, RecordMeta, SequenceRecord,
};
use crate::util::{atomic_write, mix_seed, str_tag};

pub const DATA_DIR_ENV: &str = "HDYS_DATA_DIR";

/// `$HDYS_DATA_DIR`, or `./hdys-data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("hdys-data"), PathBuf::from)
}

pub fn resolve_body(tree: &str) -> Result<BodyModel> {
    by_name(tree).ok_or_else(|| HdysError::Invalid(format!("unresolvable tree `{tree}`")))
}

/// Root seed of one sequence; every random choice of the sequence derives
/// from it.
pub fn sequence_seed(global_seed: u64, profile: &str, index: usize) -> u64 {
    mix_seed(mix_seed(global_seed, str_tag(profile)), index as u64)
}

/// Builds one sequence with oracle labels. Noise is applied to kinematics only,
/// after the labels are fixed by the oracle states.
pub fn generate_sequence(profile: &DomainProfile, body: &BodyModel, global_seed: u64, index: usize) -> Result<SequenceRecord> {
    let seed = sequence_seed(global_seed, &profile.id, index);
    let motion = MotionSpec::draw(profile.motion, &profile.ranges, body, profile.duration_s, mix_seed(seed, 1));
    let traj = motion.sample(profile.fps, profile.frames());
    let tree = &body.tree;
    let mask = profile.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    let sites = tree.markers().len();
    let (lo, hi) = (profile.markers.0.min(sites), profile.markers.1.min(sites));
    let count = if lo >= hi { hi } else { rng.gen_range(lo..=hi) };
    let mut subset = sample(&mut rng, sites, count).into_vec();
    subset.sort_unstable();
    let jitter = Jitter {
        sigma: profile.jitter_sigma,
        seed: mix_seed(seed, 3),
    };
    let id = super::manifest::sequence_id(&profile.id, index);
    let meta = RecordMeta {
        id: &id,
        profile: &profile.id,
        tree: &profile.tree,
    };
    let rec = build_representations(meta, tree, &traj, &subset, mask, profile.fps, Some(jitter))?;
    let request = DynamicsRequest {
        kinds: ChannelMask::of(&profile.dynamics),
        emg_channels: profile.emg_channels.clone(),
    };
    let rec = attach_dynamics(rec, tree, &request, mix_seed(seed, 4))
        .map_err(|e| HdysError::Invalid(format!("sequence {id}: {e}")))?;
    rec.validate()?;
    Ok(rec)
}

/// All sequences named by the manifest, in manifest order.
pub fn generate_profiles(manifest: &DatasetManifest) -> Result<Vec<SequenceRecord>> {
    let mut out = Vec::new();
    for_each_sequence(manifest, |rec| {
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

fn for_each_sequence(manifest: &DatasetManifest, mut f: impl FnMut(SequenceRecord) -> Result<()>) -> Result<()> {
    manifest.validate()?;
    for p in &manifest.profiles {
        let body = resolve_body(&p.tree)?;
        let split = &manifest.splits[&p.id];
        for id in split.train.iter().chain(&split.test) {
            let (_, index) = parse_sequence_id(id).expect("validated id");
            f(generate_sequence(p, &body, manifest.global_seed, index)?)?;
        }
    }
    Ok(())
}

pub fn record_path(root: &Path, rec_profile: &str, id: &str) -> PathBuf {
    root.join(rec_profile).join(format!("{id}.rec"))
}

fn write_trees(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut trees: Vec<&str> = manifest.profiles.iter().map(|p| p.tree.as_str()).collect();
    trees.sort_unstable();
    trees.dedup();
    for t in trees {
        let body = resolve_body(t)?;
        atomic_write(&root.join("trees").join(format!("{t}.json")), body.tree.to_json().as_bytes())?;
    }
    Ok(())
}

/// Generates and writes every sequence, streaming to disk.
pub fn generate_dataset(root: &Path, manifest: &DatasetManifest) -> Result<usize> {
    std::fs::create_dir_all(root)?;
    write_trees(root, manifest)?;
    let mut n = 0;
    for_each_sequence(manifest, |rec| {
        write_record(&record_path(root, &rec.profile, &rec.id), &rec)?;
        n += 1;
        Ok(())
    })?;
    manifest.save(&root.join("manifest.json"))?;
    Ok(n)
}

pub fn write_dataset(root: &Path, manifest: &DatasetManifest, records: &[SequenceRecord]) -> Result<()> {
    manifest.validate()?;
    std::fs::create_dir_all(root)?;
    write_trees(root, manifest)?;
    for rec in records {
        if manifest.profile(&rec.profile).is_none() {
            return Err(HdysError::Invalid(format!("record {} has unknown profile {}", rec.id, rec.profile)));
        }
        write_record(&record_path(root, &rec.profile, &rec.id), rec)?;
    }
    manifest.save(&root.join("manifest.json"))
}

/// A manifest plus its decoded records, keyed by sequence id.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Shared so subset views stay cheap.
    pub records: Arc<BTreeMap<String, SequenceRecord>>,
}

impl Dataset {
    pub fn from_records(manifest: DatasetManifest, records: Vec<SequenceRecord>) -> Self {
        Dataset {
            manifest,
            records: Arc::new(records.into_iter().map(|r| (r.id.clone(), r)).collect()),
        }
    }

    pub fn get(&self, id: &str) -> Result<&SequenceRecord> {
        self.records
            .get(id)
            .ok_or_else(|| HdysError::Invalid(format!("sequence {id} not loaded")))
    }

    /// Same records under a different (subset) manifest.
    pub fn with_manifest(&self, manifest: DatasetManifest) -> Dataset {
        Dataset {
            manifest,
            records: Arc::clone(&self.records),
        }
    }
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

/// Reads the manifest and every sequence it names, validating each record.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let mpath = manifest_path(root);
    if !mpath.exists() {
        return Err(HdysError::MissingDataset {
            path: root.display().to_string(),
        });
    }
    let manifest = DatasetManifest::load(&mpath)?;
    read_records(root, manifest)
}

/// Reads the records named by `manifest` from `root`.
pub fn read_records(root: &Path, manifest: DatasetManifest) -> Result<Dataset> {
    let mut records = BTreeMap::new();
    for p in &manifest.profiles {
        let split = &manifest.splits[&p.id];
        for id in split.train.iter().chain(&split.test) {
            let rec = read_record(&record_path(root, &p.id, id))?;
            if rec.id != *id || rec.profile != p.id || rec.tree != p.tree {
                return Err(HdysError::InvalidRecord(format!("{id}: header does not match the manifest")));
            }
            if rec.mask() != p.mask() {
                return Err(HdysError::InvalidRecord(format!("{id}: availability mask differs from profile {}", p.id)));
            }
            records.insert(id.clone(), rec);
        }
    }
    Ok(Dataset {
        manifest,
        records: Arc::new(records),
    })
}
