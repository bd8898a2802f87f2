//! Generates a small five-profile corpus, writes it to disk and reads it back.
//!
//! `cargo run --example gen_data -- [out_dir]`

use hdys::datahub::{default_profiles, generate_dataset, read_dataset, DatasetManifest};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("hdys-example-data").display().to_string());
    let profiles = default_profiles()
        .into_iter()
        .map(|mut p| {
            p.train_count = 4;
            p.test_count = 2;
            p
        })
        .collect();
    let manifest = DatasetManifest::new(0, profiles).unwrap();
    generate_dataset(out.as_ref(), &manifest).unwrap();
    let ds = read_dataset(out.as_ref()).unwrap();
    println!("wrote {} sequences to {out}", ds.records.len());
    for p in &ds.manifest.profiles {
        let first = ds.get(&ds.manifest.splits[&p.id].train[0]).unwrap();
        let channels: Vec<String> = first
            .mask()
            .channels()
            .into_iter()
            .map(|c| format!("{c}[{}]", first.block(c).unwrap().width))
            .collect();
        println!("  {} tree {:<3} {} frames @ {} fps: {}", p.id, p.tree, first.frames(), p.fps, channels.join(" "));
    }
}
