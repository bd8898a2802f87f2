//! Runs the twenty-run ablation grid with a short schedule on a small corpus
//! and prints one headline number per run.

use hdys::datahub::{default_profiles, generate_profiles, Dataset, DatasetManifest};
use hdys::engine::ablation_suite;
use hdys::HdysConfig;

fn main() {
    let profiles = default_profiles()
        .into_iter()
        .map(|mut p| {
            p.train_count = 4;
            p.test_count = 2;
            p.duration_s = 1.0;
            p
        })
        .collect();
    let manifest = DatasetManifest::new(0, profiles).unwrap();
    let ds = Dataset::from_records(manifest.clone(), generate_profiles(&manifest).unwrap());

    let mut cfg = HdysConfig::desk();
    cfg.suite.epochs = 3;
    let report = ablation_suite(&cfg, &ds, &[0], 1, |msg| eprintln!("{msg}")).unwrap();
    for r in &report.runs {
        let a = r.report.profile("A").map(|p| p.avg().mpje).unwrap_or(f64::NAN);
        let reused = r.reused_from.as_deref().map(|s| format!(" (same as {s})")).unwrap_or_default();
        println!("{:<24} {:<10} params {:>8}  A mPJE {a:.4}{reused}", r.run, r.variant, r.parameters);
    }
}
