mod common;

use hdys::config::{Activation, Similarity};
use hdys::engine::{train, train_with};
use hdys::kinrep::Channel;
use hdys::model::batch::KinInput;
use hdys::model::losses::{group_loss, loss_align, loss_recon, ReconTerm};
use hdys::model::nn::{Ctx, Init, SetEncoder};
use hdys::model::{build_group, Model, Window};
use hdys_numcore::{accumulate_grads, Binder, Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{tiny_config, tiny_dataset};

fn set_encoder(seed: u64) -> (ParamStore, SetEncoder) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = SetEncoder::new(
        &mut Init {
            store: &mut store,
            rng: &mut rng,
        },
        "enc",
        9,
        8,
        2,
        2,
        2,
        6,
    );
    (store, enc)
}

fn encode(store: &ParamStore, enc: &SetEncoder, tokens: &[Vec<f64>], sets: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let mut p = Binder::new(store);
    let flat: Vec<f64> = tokens.iter().flatten().copied().collect();
    let x = g.constant(Tensor::matrix(tokens.len(), 9, flat));
    let mut ctx = Ctx::eval(Activation::Gelu);
    let out = enc.forward(&mut g, &mut p, &mut ctx, x, sets).unwrap();
    g.value(out).data().to_vec()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn set_encoder_ignores_token_order(seed in any::<u64>(), per_set in 2usize..9, sets in 1usize..4) {
        let (store, enc) = set_encoder(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let tokens: Vec<Vec<f64>> = (0..sets * per_set)
            .map(|_| (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let base = encode(&store, &enc, &tokens, sets);
        let mut shuffled = Vec::new();
        for s in 0..sets {
            let mut chunk = tokens[s * per_set..(s + 1) * per_set].to_vec();
            chunk.reverse();
            chunk.rotate_left(rng.gen_range(0..per_set));
            shuffled.extend(chunk);
        }
        prop_assert!(max_abs_diff(&base, &encode(&store, &enc, &shuffled, sets)) <= 1e-10);
        // every token twice: softmax weights and the mean pool are unchanged
        let doubled: Vec<Vec<f64>> = (0..sets)
            .flat_map(|s| {
                let chunk = &tokens[s * per_set..(s + 1) * per_set];
                chunk.iter().chain(chunk).cloned().collect::<Vec<_>>()
            })
            .collect();
        prop_assert!(max_abs_diff(&base, &encode(&store, &enc, &doubled, sets)) <= 1e-10);
    }
}

#[test]
fn align_fixture_values() {
    let mut g = Graph::new();
    let a = g.param(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let b = g.param(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let l = loss_align(&mut g, &[a, b], Similarity::Raw, 1.0).unwrap();
    let want = (1.0 + (-1.0f64).exp()).ln();
    assert!((g.value(l).item() - want).abs() <= 1e-9);
    let one_a = g.param(Tensor::matrix(1, 3, vec![0.4, 2.0, -1.0]));
    let one_b = g.param(Tensor::matrix(1, 3, vec![-3.0, 0.1, 0.7]));
    let l = loss_align(&mut g, &[one_a, one_b], Similarity::Raw, 1.0).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
}

/// Independent InfoNCE on plain vectors, cosine mode.
fn info_nce_oracle(sources: &[Vec<Vec<f64>>], t: f64) -> f64 {
    let norm = |v: &Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let z: Vec<Vec<Vec<f64>>> = sources.iter().map(|s| s.iter().map(norm).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / t;
    let b = z[0].len();
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..z.len() {
        for j in 0..z.len() {
            if i == j {
                continue;
            }
            let mut term = 0.0;
            for r in 0..b {
                let lse = (0..b).map(|c| dot(&z[i][r], &z[j][c]).exp()).sum::<f64>().ln();
                term += lse - dot(&z[i][r], &z[j][r]);
            }
            total += term / b as f64;
            pairs += 1;
        }
    }
    total / pairs as f64
}

#[test]
fn align_matches_reference_on_three_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sources: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
        .collect();
    let mut g = Graph::new();
    let vars: Vec<_> = sources
        .iter()
        .map(|s| g.param(Tensor::matrix(5, 4, s.iter().flatten().copied().collect())))
        .collect();
    let l = loss_align(&mut g, &vars, Similarity::Cosine, 0.1).unwrap();
    assert!((g.value(l).item() - info_nce_oracle(&sources, 0.1)).abs() < 1e-10);
}

#[test]
fn recon_hand_fixture_and_half_mask() {
    let mut g = Graph::new();
    // dynamics: |1-0|+|2-2|+|0-3|+|4-4| over 4 entries = 1
    let p = g.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 0.0, 4.0]));
    let t = g.constant(Tensor::matrix(2, 2, vec![0.0, 2.0, 3.0, 4.0]));
    // two acceleration targets pooled: (2 + 0 + 1 + 1 + 1 + 1) / 6 = 1
    let a1 = g.param(Tensor::matrix(2, 1, vec![2.0, 0.0]));
    let t1 = g.constant(Tensor::matrix(2, 1, vec![0.0, 0.0]));
    let a2 = g.param(Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0]));
    let t2 = g.constant(Tensor::matrix(2, 2, vec![0.0, 0.0, 0.0, 0.0]));
    let term = |pred, target| ReconTerm { pred, target, rows: None };
    let l = loss_recon(&mut g, &[term(p, t)], &[term(a1, t1), term(a2, t2)]).unwrap();
    assert_eq!(g.value(l).item(), 1.0 + 1.0);

    let half = ReconTerm {
        pred: p,
        target: t,
        rows: Some(vec![1]),
    };
    let masked = loss_recon(&mut g, &[half], &[]).unwrap();
    let p1 = g.param(Tensor::matrix(1, 2, vec![0.0, 4.0]));
    let t1b = g.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]));
    let alone = loss_recon(&mut g, &[term(p1, t1b)], &[]).unwrap();
    assert_eq!(g.value(masked).item(), g.value(alone).item());
}

fn group<'a>(ds: &'a hdys::datahub::Dataset, profile: &str, windows: usize, window: usize) -> Vec<Window<'a>> {
    let ids = &ds.manifest.splits[profile].train;
    (0..windows)
        .map(|i| Window {
            rec: ds.get(&ids[i % ids.len()]).unwrap(),
            start: (7 * i) % (ds.get(&ids[0]).unwrap().frames() - window),
        })
        .collect()
}

#[test]
fn heads_follow_availability() {
    let ds = tiny_dataset(0);
    let cfg = tiny_config();
    let model = Model::initialize(&cfg, &ds).unwrap();
    let w = cfg.model.window;
    let mut ctx = Ctx::eval(cfg.model.activation);
    for (profile, accel) in [("A", vec![Channel::Keypoints, Channel::Angles]), ("D", vec![Channel::Keypoints])] {
        let gb = build_group(&model, &group(&ds, profile, 2, w), false).unwrap();
        let mut g = Graph::new();
        let mut p = Binder::new(&model.store);
        let f = model.forward(&mut g, &mut p, &mut ctx, &gb, true).unwrap();
        let got: Vec<Channel> = f.acc_hat.iter().map(|(c, _)| *c).collect();
        assert_eq!(got, accel, "profile {profile}");
        assert_eq!(f.z.len(), f.sources.len());
        assert_eq!(f.z_fd.len(), f.sources.len());
        for (c, v) in &f.acc_hat {
            let (_, target) = gb.accel.iter().find(|(k, _)| k == c).unwrap();
            assert_eq!(g.value(*v).cols(), target.cols());
            assert_eq!(g.value(*v).rows(), f.sources.len() * gb.rows());
        }
        if profile == "A" {
            let (_, v) = f.acc_hat.iter().find(|(c, _)| *c == Channel::Angles).unwrap();
            assert_eq!(g.value(*v).cols(), 23);
        }
        let z = g.concat_rows(&f.z_fd).unwrap();
        assert!(model.fd_decode(&mut g, &mut p, &mut ctx, z, Channel::Markers, &gb.tree).is_err());
    }
}

fn decode_rows(model: &Model, gb: &hdys::model::batch::GroupBatch) -> Vec<f64> {
    let mut g = Graph::new();
    let mut p = Binder::new(&model.store);
    let mut ctx = Ctx::eval(model.cfg.model.activation);
    let f = model.forward(&mut g, &mut p, &mut ctx, gb, false).unwrap();
    g.value(f.tau_hat.unwrap()).data().to_vec()
}

#[test]
fn temporal_refinement_is_the_only_cross_frame_path() {
    let ds = tiny_dataset(0);
    for no_tr in [true, false] {
        let mut cfg = tiny_config();
        cfg.ablation.no_temporal_refinement = no_tr;
        let model = Model::initialize(&cfg, &ds).unwrap();
        let w = cfg.model.window;
        let gb = build_group(&model, &group(&ds, "A", 1, w), false).unwrap();
        let base = decode_rows(&model, &gb);
        let mut bumped = gb.clone();
        let (ci, _) = bumped.kin.iter().enumerate().find(|(_, (c, _))| *c == Channel::Angles).unwrap();
        let KinInput::Vector(t) = &mut bumped.kin[ci].1 else { panic!("angles are a vector input") };
        let cols = t.cols();
        t.data_mut()[5 * cols] += 1.0;
        let out = decode_rows(&model, &bumped);
        let width = out.len() / (gb.kin.len() * gb.rows());
        let changed: Vec<usize> = (0..out.len() / width)
            .filter(|r| max_abs_diff(&out[r * width..(r + 1) * width], &base[r * width..(r + 1) * width]) > 0.0)
            .collect();
        let row = ci * gb.rows() + 5;
        if no_tr {
            assert_eq!(changed, vec![row]);
        } else {
            assert!(changed.contains(&row) && changed.len() > 1);
            assert!(changed.iter().all(|r| r / gb.rows() == ci));
        }
    }
}

#[test]
fn every_trainable_parameter_receives_gradient() {
    let ds = tiny_dataset(0);
    let cfg = tiny_config();
    let model = Model::initialize(&cfg, &ds).unwrap();
    let mut acc = vec![None; model.store.len()];
    let mut ctx = Ctx::eval(cfg.model.activation);
    for p in &ds.manifest.profiles {
        let gb = build_group(&model, &group(&ds, &p.id, 2, cfg.model.window), true).unwrap();
        let mut g = Graph::new();
        let mut b = Binder::new(&model.store);
        let (loss, _) = group_loss(&model, &mut g, &mut b, &mut ctx, &gb).unwrap().unwrap();
        let mut grads = g.backward(loss.total).unwrap();
        accumulate_grads(&mut acc, b.take_grads(&mut grads));
    }
    for (param, grad) in model.store.iter().zip(&acc) {
        if !param.trainable {
            assert!(grad.is_none(), "{} is frozen", param.name);
            continue;
        }
        let g = grad.as_ref().unwrap_or_else(|| panic!("{} got no gradient", param.name));
        assert!(g.data().iter().any(|v| *v != 0.0), "{} gradient is zero", param.name);
    }
}

#[test]
fn parameter_counts_grow_with_latent_size() {
    let ds = tiny_dataset(0);
    let counts: Vec<usize> = [32, 64, 128]
        .iter()
        .map(|&d| {
            let mut cfg = hdys::HdysConfig::desk();
            cfg.model.d = d;
            Model::initialize(&cfg, &ds).unwrap().parameter_count()
        })
        .collect();
    assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
    let mut cfg = hdys::HdysConfig::desk();
    let full = Model::initialize(&cfg, &ds).unwrap();
    cfg.ablation.no_fdae = true;
    let lean = Model::initialize(&cfg, &ds).unwrap();
    assert!(!lean.has_fdae() && full.has_fdae());
    assert!(lean.store.iter().all(|p| !p.name.starts_with("fd.")));
}

#[test]
fn checkpoint_round_trip_and_zero_epochs() {
    let ds = tiny_dataset(0);
    let mut cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let out = train(&cfg, &ds).unwrap();
    out.model.save(dir.path(), "m").unwrap();
    let back = Model::load(&dir.path().join("m.ckpt")).unwrap();
    assert_eq!(back.checkpoint().encode(), out.model.checkpoint().encode());
    assert_eq!(back.cfg, out.model.cfg);
    assert_eq!(std::fs::read(dir.path().join("m.ckpt")).unwrap(), back.checkpoint().encode());

    cfg.train.epochs = 0;
    let none = train(&cfg, &ds).unwrap();
    assert!(none.curve.is_empty());
    let init = Model::initialize(&cfg, &ds).unwrap();
    assert_eq!(none.model.checkpoint().encode(), init.checkpoint().encode());
}

#[test]
fn same_seed_same_curve() {
    let ds = tiny_dataset(0);
    let mut cfg = tiny_config();
    cfg.train.dropout = 0.1;
    let run = |cfg: &hdys::HdysConfig| {
        let mut seen = Vec::new();
        let out = train_with(cfg, &ds, |e| seen.push((e.recon.to_bits(), e.align.to_bits()))).unwrap();
        (seen, out.model.checkpoint().encode())
    };
    let (a, ca) = run(&cfg);
    let (b, cb) = run(&cfg);
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    cfg.train.seed = 1;
    let (c, _) = run(&cfg);
    assert_ne!(a, c);
}

#[test]
fn kinematics_only_group_without_alignment_is_dead() {
    let ds = tiny_dataset(0);
    let mut cfg = tiny_config();
    cfg.ablation.no_align = true;
    let model = Model::initialize(&cfg, &ds).unwrap();
    let gb = build_group(&model, &group(&ds, "E", 2, cfg.model.window), true).unwrap();
    let mut g = Graph::new();
    let mut b = Binder::new(&model.store);
    let mut ctx = Ctx::eval(cfg.model.activation);
    assert!(group_loss(&model, &mut g, &mut b, &mut ctx, &gb).unwrap().is_none());
    let mut only_e = cfg.clone();
    only_e.data.profiles = vec!["E".into()];
    let view = ds.with_manifest(hdys::engine::restrict_profiles(&ds.manifest, &only_e.data.profiles).unwrap());
    assert!(matches!(train(&only_e, &view), Err(hdys::error::HdysError::DeadConfig(_))));
}
