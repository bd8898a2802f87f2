//! Trains a reduced model on a small generated corpus and prints the
//! per-profile test metrics next to the zero-torque baseline.
//!
//! Extra arguments are `key=value` config overrides, e.g. `train.epochs=40`.

use hdys::datahub::{default_profiles, generate_profiles, Dataset, DatasetManifest};
use hdys::engine::{evaluate, train_with, Split};
use hdys::HdysConfig;

fn main() {
    let profiles = default_profiles()
        .into_iter()
        .map(|mut p| {
            p.train_count = 12;
            p.test_count = 4;
            p
        })
        .collect();
    let manifest = DatasetManifest::new(0, profiles).unwrap();
    let ds = Dataset::from_records(manifest.clone(), generate_profiles(&manifest).unwrap());

    let mut cfg = HdysConfig::desk();
    cfg.train.epochs = 30;
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    cfg.apply_overrides(&overrides).unwrap();

    let out = train_with(&cfg, &ds, |e| {
        if e.epoch == 1 || e.epoch % 10 == 0 {
            println!("epoch {:>4}  recon {:.4}  align {:.4}", e.epoch, e.recon, e.align);
        }
    })
    .unwrap();
    println!("trained {} parameters in {:.1}s", out.model.parameter_count(), out.elapsed.as_secs_f64());

    let report = evaluate(&out.model, &ds, Split::Test, &[], true).unwrap();
    for p in &report.profiles {
        let h = p.headline.as_str();
        println!(
            "{}  {h}: avg {:.4}  {} {:.4}  zero {:.4}",
            p.profile,
            p.avg().get(h),
            p.best.representation,
            p.best.get(h),
            p.zero.get(h)
        );
    }
    println!("same-frame latent cosine {:.3}", report.latent_cosine_mean);
}
