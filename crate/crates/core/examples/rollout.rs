//! Rolls the rigid-body model forward from recorded states under oracle and
//! predicted torques and prints the joint-angle error table.

use hdys::datahub::{default_profiles, generate_profiles, Dataset, DatasetManifest};
use hdys::engine::{rollout_eval, train, TorqueSource};
use hdys::HdysConfig;

fn main() {
    let profiles = default_profiles()
        .into_iter()
        .filter(|p| p.id == "A")
        .map(|mut p| {
            p.train_count = 8;
            p.test_count = 2;
            p
        })
        .collect();
    let manifest = DatasetManifest::new(0, profiles).unwrap();
    let ds = Dataset::from_records(manifest.clone(), generate_profiles(&manifest).unwrap());

    let mut cfg = HdysConfig::desk();
    cfg.train.epochs = 40;
    cfg.rollout.start_stride = 20;
    let model = train(&cfg, &ds).unwrap().model;

    let ks = [1, 2, 3, 4, 5];
    let fps = [90.0, 150.0];
    let report = rollout_eval(&model, &ds, &ks, &fps).unwrap();
    println!("{:>9} {:>5} {}", "source", "fps", ks.map(|k| format!("{:>10}", format!("k={k}"))).join(""));
    for source in [TorqueSource::Oracle, TorqueSource::Predicted] {
        for f in fps {
            let row: String = ks
                .iter()
                .map(|&k| format!("{:>10.2e}", report.cell(source, f, k).unwrap().mse))
                .collect();
            println!("{:>9} {f:>5} {row}", source.name());
        }
    }
}
