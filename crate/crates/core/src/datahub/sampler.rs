//! Balanced per-profile epoch sampling and training-set subsetting.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::DatasetManifest;
use crate::error::{HdysError, Result};
use crate::util::{mix_seed, str_tag};

/// Exactly `quota` training ids per sampled profile, grouped by profile in
/// manifest order.
///
/// A profile with at least `quota` sequences is drawn without replacement.
/// A smaller profile contributes every sequence once and fills the rest by
/// uniform draws with replacement, so nothing goes unseen in an epoch.
pub fn balanced_epoch_sampler(manifest: &DatasetManifest, quota: usize, seed: u64, epoch: usize) -> Result<Vec<String>> {
    if quota == 0 {
        return Err(HdysError::Invalid("sampler quota must be positive".into()));
    }
    let mut out = Vec::new();
    for p in manifest.sampled_profiles() {
        let train = &manifest.splits[&p.id].train;
        if train.is_empty() {
            return Err(HdysError::Invalid(format!("profile {} has no training sequences", p.id)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, epoch as u64), str_tag(&p.id)));
        let n = train.len();
        let mut picks: Vec<usize> = if n >= quota {
            sample(&mut rng, n, quota).into_vec()
        } else {
            let mut v: Vec<usize> = (0..n).collect();
            v.extend((n..quota).map(|_| rng.gen_range(0..n)));
            v.shuffle(&mut rng);
            v
        };
        picks.truncate(quota);
        out.extend(picks.into_iter().map(|i| train[i].clone()));
    }
    Ok(out)
}

/// Keeps the first `⌈f·n⌉` training ids of a seeded permutation per profile.
/// Profiles missing from `fractions` keep everything; a fraction of 0 takes
/// the profile out of sampling while its test split stays intact.
pub fn subset_dataset(manifest: &DatasetManifest, fractions: &BTreeMap<String, f64>, seed: u64) -> Result<DatasetManifest> {
    if let Some(k) = fractions.keys().find(|k| manifest.profile(k).is_none()) {
        return Err(HdysError::Invalid(format!("fraction for unknown profile {k}")));
    }
    let counts = manifest
        .profiles
        .iter()
        .map(|p| {
            let n = manifest.splits[&p.id].train.len();
            let f = fractions.get(&p.id).copied().unwrap_or(1.0);
            if !(0.0..=1.0).contains(&f) {
                return Err(HdysError::Invalid(format!("fraction {f} for {} outside [0, 1]", p.id)));
            }
            let k = (f * n as f64 - 1e-9).ceil().max(0.0) as usize;
            if f > 0.0 && k == 0 {
                return Err(HdysError::Invalid(format!("fraction {f} leaves profile {} empty", p.id)));
            }
            Ok((p.id.clone(), k))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    take_counts(manifest, &counts, seed)
}

fn take_counts(manifest: &DatasetManifest, counts: &BTreeMap<String, usize>, seed: u64) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    for p in &manifest.profiles {
        let split = out.splits.get_mut(&p.id).expect("validated manifest");
        let k = counts[&p.id];
        let mut ids = split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, 0x5b5e7), str_tag(&p.id)));
        ids.shuffle(&mut rng);
        ids.truncate(k);
        // keep manifest order for readability
        split.train.retain(|id| ids.contains(id));
        split.sampled = k > 0;
    }
    out.validate()?;
    Ok(out)
}

/// Target at 50%, every other profile removed.
pub fn single_50(manifest: &DatasetManifest, target: &str, seed: u64) -> Result<DatasetManifest> {
    let fractions = manifest
        .profiles
        .iter()
        .map(|p| (p.id.clone(), if p.id == target { 0.5 } else { 0.0 }))
        .collect();
    subset_dataset(manifest, &fractions, seed)
}

/// Target only, at full size.
pub fn single(manifest: &DatasetManifest, target: &str, seed: u64) -> Result<DatasetManifest> {
    let fractions = manifest
        .profiles
        .iter()
        .map(|p| (p.id.clone(), if p.id == target { 1.0 } else { 0.0 }))
        .collect();
    subset_dataset(manifest, &fractions, seed)
}

/// Target at 50% plus `⌈0.5·|target|⌉` sequences drawn from the other
/// profiles in proportion to their training sizes (largest remainder).
pub fn fifty_fifty(manifest: &DatasetManifest, target: &str, seed: u64) -> Result<DatasetManifest> {
    let n_target = manifest
        .split(target)
        .ok_or_else(|| HdysError::Invalid(format!("unknown profile {target}")))?
        .train
        .len();
    let budget = n_target.div_ceil(2);
    let others: Vec<(String, usize)> = manifest
        .profiles
        .iter()
        .filter(|p| p.id != target)
        .map(|p| (p.id.clone(), manifest.splits[&p.id].train.len()))
        .collect();
    let total: usize = others.iter().map(|o| o.1).sum();
    if total < budget {
        return Err(HdysError::Invalid("other profiles are too small for a 50/50 mix".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    counts.insert(target.to_string(), budget);
    let mut rema: Vec<(f64, usize)> = Vec::new();
    let mut used = 0;
    for (i, (id, n)) in others.iter().enumerate() {
        let exact = budget as f64 * *n as f64 / total.max(1) as f64;
        let base = exact.floor() as usize;
        used += base;
        counts.insert(id.clone(), base);
        rema.push((exact - base as f64, i));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rema.iter().take(budget - used) {
        *counts.get_mut(&others[i].0).unwrap() += 1;
    }
    take_counts(manifest, &counts, seed)
}
