#![allow(dead_code)]

use hdys::datahub::{default_profiles, generate_profiles, Dataset, DatasetManifest};
use hdys::HdysConfig;

/// The five default domains shrunk to a handful of one-second sequences.
pub fn tiny_manifest(seed: u64, train: usize, test: usize) -> DatasetManifest {
    let profiles = default_profiles()
        .into_iter()
        .map(|mut p| {
            p.train_count = train;
            p.test_count = test;
            p.duration_s = 1.0;
            p
        })
        .collect();
    DatasetManifest::new(seed, profiles).unwrap()
}

pub fn tiny_dataset(seed: u64) -> Dataset {
    let m = tiny_manifest(seed, 3, 2);
    let recs = generate_profiles(&m).unwrap();
    Dataset::from_records(m, recs)
}

/// A narrow model that trains in well under a second per epoch.
pub fn tiny_config() -> HdysConfig {
    let mut c = HdysConfig::desk();
    c.apply_overrides(&[
        "model.d=16",
        "model.set_width=8",
        "model.set_layers=1",
        "model.mlp_hidden=32,16",
        "model.temporal_layers=1",
        "model.temporal_heads=2",
        "model.head_small=16",
        "model.head_large=16",
        "model.dyn_hidden=16",
        "model.composer_hidden=16",
        "train.quota=2",
        "train.frames_per_batch=160",
        "train.epochs=2",
    ])
    .unwrap();
    c
}
