mod common;

use std::collections::{BTreeMap, BTreeSet};

use hdys::datahub::*;
use hdys::error::HdysError;
use hdys::kinrep::Channel;
use proptest::prelude::*;

use common::tiny_manifest;

#[test]
fn records_round_trip_bit_exactly() {
    let m = tiny_manifest(3, 2, 1);
    let dir = tempfile::tempdir().unwrap();
    let recs = generate_profiles(&m).unwrap();
    write_dataset(dir.path(), &m, &recs).unwrap();
    let ds = read_dataset(dir.path()).unwrap();
    assert_eq!(ds.manifest, m);
    for r in &recs {
        let back = ds.get(&r.id).unwrap();
        assert_eq!(encode_record(back), encode_record(r));
        for c in Channel::ALL {
            let (a, b) = (r.block(c), back.block(c));
            assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&a.data), bits(&b.data), "{} {c}", r.id);
            }
        }
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let m = tiny_manifest(11, 2, 1);
    let a: Vec<Vec<u8>> = generate_profiles(&m).unwrap().iter().map(encode_record).collect();
    let b: Vec<Vec<u8>> = generate_profiles(&m).unwrap().iter().map(encode_record).collect();
    assert_eq!(a, b);
    let other = tiny_manifest(12, 2, 1);
    let c: Vec<Vec<u8>> = generate_profiles(&other).unwrap().iter().map(encode_record).collect();
    assert_ne!(a, c);
}

#[test]
fn profile_channels_follow_the_profile() {
    let m = tiny_manifest(0, 1, 1);
    let recs = generate_profiles(&m).unwrap();
    for r in &recs {
        let p = m.profile(&r.profile).unwrap();
        assert_eq!(r.mask(), p.mask(), "{}", r.id);
        assert_eq!(r.frames(), p.frames());
        r.validate().unwrap();
    }
}

#[test]
fn corrupt_magic_is_a_version_error() {
    let m = tiny_manifest(0, 1, 1);
    let rec = &generate_profiles(&m).unwrap()[0];
    let mut bytes = encode_record(rec);
    bytes[7] = b'9';
    assert!(matches!(decode_record(&bytes), Err(HdysError::Version { .. })));
}

#[test]
fn truncated_payload_is_rejected() {
    let m = tiny_manifest(0, 1, 1);
    let rec = &generate_profiles(&m).unwrap()[0];
    let bytes = encode_record(rec);
    let cut = &bytes[..bytes.len() - 8];
    assert!(matches!(decode_record(cut), Err(HdysError::InvalidRecord(_))));
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    for at in [12 + hlen, bytes.len() - 8] {
        let mut nan = bytes.clone();
        nan[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_record(&nan), Err(HdysError::InvalidRecord(_))), "offset {at}");
    }
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_dataset(&dir.path().join("nothing")).unwrap_err();
    assert!(matches!(err, HdysError::MissingDataset { .. }));
    assert!(err.to_string().contains("gen-data"));
}

#[test]
fn quota_and_coverage() {
    let m = tiny_manifest(0, 5, 1);
    for quota in [3, 5, 9] {
        let ids = balanced_epoch_sampler(&m, quota, 4, 2).unwrap();
        let mut per: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for id in &ids {
            per.entry(parse_sequence_id(id).unwrap().0).or_default().push(id);
        }
        assert_eq!(per.len(), m.profiles.len());
        for (p, got) in per {
            assert_eq!(got.len(), quota);
            let distinct: BTreeSet<_> = got.iter().collect();
            assert_eq!(distinct.len(), quota.min(5), "profile {p}");
            assert!(got.iter().all(|id| m.splits[p].train.iter().any(|t| t == id)));
        }
    }
    assert_eq!(balanced_epoch_sampler(&m, 3, 4, 2).unwrap(), balanced_epoch_sampler(&m, 3, 4, 2).unwrap());
    assert_ne!(balanced_epoch_sampler(&m, 3, 4, 2).unwrap(), balanced_epoch_sampler(&m, 3, 4, 3).unwrap());
}

#[test]
fn subsets_keep_test_splits() {
    let m = tiny_manifest(0, 8, 3);
    let half: BTreeMap<String, f64> = [("A".to_string(), 0.5), ("C".to_string(), 0.0)].into();
    let variants = [
        subset_dataset(&m, &half, 1).unwrap(),
        single(&m, "A", 1).unwrap(),
        single_50(&m, "A", 1).unwrap(),
        fifty_fifty(&m, "A", 1).unwrap(),
    ];
    for v in &variants {
        for p in &m.profiles {
            assert_eq!(v.splits[&p.id].test, m.splits[&p.id].test);
            assert!(v.splits[&p.id].train.iter().all(|id| m.splits[&p.id].train.contains(id)));
        }
    }
    let s = &variants[0];
    assert_eq!(s.splits["A"].train.len(), 4);
    assert!(!s.splits["C"].sampled);
    assert!(s.sampled_profiles().iter().all(|p| p.id != "C"));
    let ff = &variants[3];
    let others: usize = ff.profiles.iter().filter(|p| p.id != "A").map(|p| ff.splits[&p.id].train.len()).sum();
    assert_eq!(ff.splits["A"].train.len(), 4);
    assert_eq!(others, 4);
    assert!(subset_dataset(&m, &[("Z".to_string(), 0.5)].into(), 1).is_err());
    assert!(subset_dataset(&m, &[("A".to_string(), 1.5)].into(), 1).is_err());
}

#[test]
fn manifest_json_round_trip() {
    let m = tiny_manifest(5, 2, 2);
    let back = DatasetManifest::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
}

/// Pooled over many epochs the per-sequence counts within a profile are
/// uniform: Pearson χ² stays below the 0.9999 quantile for 9 dof.
#[test]
fn sampler_is_uniform_within_profiles() {
    let m = tiny_manifest(0, 10, 1);
    for seed in 0..8u64 {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        let epochs = 200;
        for e in 0..epochs {
            for id in balanced_epoch_sampler(&m, 4, seed, e).unwrap() {
                *counts.entry(id).or_default() += 1.0;
            }
        }
        for p in &m.profiles {
            let expected = epochs as f64 * 4.0 / 10.0;
            let chi2: f64 = m.splits[&p.id]
                .train
                .iter()
                .map(|id| (counts.get(id).copied().unwrap_or(0.0) - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < 33.72, "seed {seed} profile {} chi2 {chi2}", p.id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subset_sizes_are_ceilings(f in 0.05f64..=1.0, seed in any::<u64>()) {
        let m = tiny_manifest(0, 7, 1);
        let s = subset_dataset(&m, &[("B".to_string(), f)].into(), seed).unwrap();
        let want = (f * 7.0 - 1e-9).ceil() as usize;
        prop_assert_eq!(s.splits["B"].train.len(), want);
        prop_assert_eq!(&s.splits["A"].train, &m.splits["A"].train);
    }
}
