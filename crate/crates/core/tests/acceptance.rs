//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 if any criterion fails. Positional arguments restrict the run to
//! criteria whose names contain one of them.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hdys::config::Similarity;
use hdys::datahub::{
    default_profiles, generate_profiles, read_dataset, write_dataset, encode_record, Dataset, DatasetManifest,
};
use hdys::engine::*;
use hdys::kinrep::finite_difference;
use hdys::model::losses::{loss_align, loss_recon, ReconTerm};
use hdys::model::nn::{Ctx, Init, SetEncoder};
use hdys::model::Model;
use hdys::HdysConfig;
use hdys_numcore::{grad_check_all, Binder, Graph, ParamStore, Tensor};
use hdys_rbd::fixtures::{pendulum, random_chain, three_muscle_fixture, STANDARD_GRAVITY};
use hdys_rbd::{
    forward_dynamics, mass_matrix, muscle_to_torque, rnea, solve_activations, GeneralizedState, Muscle, MuscleSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];

type Check = (bool, String);

struct Suite {
    filters: Vec<String>,
    results: Vec<(String, bool)>,
}

impl Suite {
    fn wants(&self, name: &str) -> bool {
        self.filters.is_empty() || self.filters.iter().any(|f| name.contains(f.as_str()))
    }

    fn run(&mut self, name: &str, f: impl FnOnce() -> Check) {
        if !self.wants(name) {
            return;
        }
        let t = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        self.results.push((name.to_string(), pass));
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-span..span)).collect()
}

// ---------------------------------------------------------------- kernels

fn autodiff() -> Check {
    let t = Instant::now();
    let reports = grad_check_all(10, 1e-4, 7);
    let elapsed = t.elapsed();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.kind.as_str()).collect();
    (
        failed.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{} kernels x 10 trials, worst rel err {worst:.2e}, failed {failed:?}, {:.1}s",
            reports.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- physics

fn physics_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let tree = random_chain(&mut rng, 2 + trial % 5);
        let n = tree.dof_count();
        let q = random_vec(&mut rng, n, 2.0);
        let qd = random_vec(&mut rng, n, 2.0);
        let tau = random_vec(&mut rng, n, 20.0);
        let qdd = forward_dynamics(&tree, &q, &qd, &tau, &[]).unwrap();
        let back = rnea(&tree, &GeneralizedState::new(q, qd, qdd), &[]).unwrap();
        worst = worst.max(max_abs(&back, &tau));
    }
    (worst <= 1e-8, format!("100 chains, max |rnea(fd(tau)) - tau| = {worst:.2e}"))
}

fn physics_pendulum() -> Check {
    let (m, lc) = (2.5, 0.4);
    let tree = pendulum(m, lc, 0.03);
    let mut worst = 0.0f64;
    for k in 0..=40 {
        let q = -3.0 + 0.15 * k as f64;
        let tau = rnea(&tree, &GeneralizedState::new(vec![q], vec![0.0], vec![0.0]), &[]).unwrap()[0];
        worst = worst.max((tau - m * STANDARD_GRAVITY * lc * q.sin()).abs());
    }
    (worst <= 1e-10, format!("41 angles, max static torque error {worst:.2e}"))
}

fn physics_mass_matrix() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut asym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for trial in 0..100 {
        let tree = random_chain(&mut rng, 2 + trial % 5);
        let q = random_vec(&mut rng, tree.dof_count(), 3.0);
        let mm = mass_matrix(&tree, &q).unwrap();
        asym = asym.max((&mm - mm.transpose()).amax());
        let sym = (&mm + mm.transpose()) * 0.5;
        min_eig = min_eig.min(sym.symmetric_eigenvalues().min());
    }
    (
        asym <= 1e-10 && min_eig > 0.0,
        format!("100 configurations, max asymmetry {asym:.2e}, min eigenvalue {min_eig:.3e}"),
    )
}

// ---------------------------------------------------------------- muscles

/// Exhaustive 1e-3 grid over the two flexors; the extensor follows from the
/// torque equality. Returns the minimum-norm feasible point.
fn grid_min_norm(ms: &MuscleSet, tau: f64) -> [f64; 3] {
    let b: Vec<f64> = ms.muscles().iter().map(|m| m.f_max * m.moment_arms[0]).collect();
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..=1000 {
        let a0 = i as f64 * 1e-3;
        for j in 0..=1000 {
            let a1 = j as f64 * 1e-3;
            let a2 = (tau - b[0] * a0 - b[1] * a1) / b[2];
            if !(-1e-12..=1.0 + 1e-12).contains(&a2) {
                continue;
            }
            let a2 = a2.clamp(0.0, 1.0);
            let n = a0 * a0 + a1 * a1 + a2 * a2;
            if n < best.1 {
                best = ([a0, a1, a2], n);
            }
        }
    }
    best.0
}

fn muscle_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_rt = 0.0f64;
    let mut fixtures = 0;
    for _ in 0..50 {
        let dofs = rng.gen_range(1..5);
        let count = 2 * dofs + rng.gen_range(0..4);
        let muscles = (0..count)
            .map(|i| Muscle {
                name: format!("m{i}"),
                moment_arms: (0..dofs)
                    .map(|j| {
                        if i % dofs == j {
                            if i / dofs % 2 == 0 { 0.05 } else { -0.05 }
                        } else {
                            rng.gen_range(-0.02..0.02)
                        }
                    })
                    .collect(),
                f_max: rng.gen_range(200.0..2000.0),
            })
            .collect();
        let ms = MuscleSet::new(muscles).unwrap();
        let a: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
        let tau = muscle_to_torque(&ms, &a).unwrap();
        let back = muscle_to_torque(&ms, &solve_activations(&ms, &tau).unwrap()).unwrap();
        worst_rt = worst_rt.max(max_abs(&back, &tau));
        fixtures += 1;
    }
    let ms = three_muscle_fixture();
    let mut worst_grid = 0.0f64;
    for tau in [15.0, 40.0, -12.0, 0.0, 50.0, -30.0] {
        let a = solve_activations(&ms, &[tau]).unwrap();
        worst_grid = worst_grid.max(max_abs(&a, &grid_min_norm(&ms, tau)));
        worst_rt = worst_rt.max((muscle_to_torque(&ms, &a).unwrap()[0] - tau).abs());
    }
    (
        worst_rt <= 1e-6 && worst_grid <= 2e-3,
        format!("{fixtures} feasible fixtures round trip {worst_rt:.2e}; 3-muscle grid gap {worst_grid:.2e}"),
    )
}

// ---------------------------------------------------------------- representation

fn finite_differences() -> Check {
    let (n, w, fps) = (30, 3, 90.0);
    let dt = 1.0 / fps;
    let coef = [(0.3, -1.2, 2.0), (-0.7, 0.4, -3.5), (1.1, 2.5, 0.25)];
    let mut lin = Vec::new();
    let mut quad = Vec::new();
    for t in 0..n {
        let s = t as f64 * dt;
        for &(a, b, c) in &coef {
            lin.push(a + b * s);
            quad.push(a + b * s + c * s * s);
        }
    }
    let (v, _) = finite_difference(&lin, w, fps).unwrap();
    let (_, acc) = finite_difference(&quad, w, fps).unwrap();
    let mut ev = 0.0f64;
    let mut ea = 0.0f64;
    for t in 1..n - 1 {
        for (j, &(_, b, c)) in coef.iter().enumerate() {
            ev = ev.max((v[t * w + j] - b).abs() / b.abs());
            ea = ea.max((acc[t * w + j] - 2.0 * c).abs() / (2.0 * c).abs());
        }
    }
    (
        ev <= 1e-9 && ea <= 1e-6,
        format!("interior relative error: velocity {ev:.1e}, acceleration {ea:.1e}"),
    )
}

fn dataset_io(ds: &Dataset) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<_> = ds.records.values().cloned().collect();
    write_dataset(dir.path(), &ds.manifest, &recs).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    let same = back.manifest == ds.manifest
        && back.records.len() == ds.records.len()
        && ds
            .records
            .iter()
            .all(|(id, r)| back.records.get(id).is_some_and(|b| encode_record(b) == encode_record(r)));
    (same, format!("{} records written and read back bit-exactly: {same}", recs.len()))
}

fn set_encoder_invariance() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = SetEncoder::new(
            &mut Init {
                store: &mut store,
                rng: &mut rng,
            },
            "enc",
            9,
            16,
            3,
            2,
            2,
            64,
        );
        let per = rng.gen_range(5..40);
        let tokens: Vec<Vec<f64>> = (0..2 * per).map(|_| random_vec(&mut rng, 9, 2.0)).collect();
        let run = |toks: &[Vec<f64>]| {
            let mut g = Graph::new();
            let mut p = Binder::new(&store);
            let x = g.constant(Tensor::matrix(toks.len(), 9, toks.iter().flatten().copied().collect()));
            let mut ctx = Ctx::eval(hdys::config::Activation::Gelu);
            let out = enc.forward(&mut g, &mut p, &mut ctx, x, 2).unwrap();
            g.value(out).data().to_vec()
        };
        let base = run(&tokens);
        let mut shuffled = tokens.clone();
        for s in 0..2 {
            let chunk = &mut shuffled[s * per..(s + 1) * per];
            for i in (1..chunk.len()).rev() {
                chunk.swap(i, rng.gen_range(0..=i));
            }
        }
        worst = worst.max(max_abs(&base, &run(&shuffled)));
    }
    (worst <= 1e-10, format!("10 encoders, max output change under token permutation {worst:.2e}"))
}

// ---------------------------------------------------------------- losses and metrics

fn loss_fixtures() -> Check {
    let mut g = Graph::new();
    let term = |pred, target| ReconTerm { pred, target, rows: None };
    let p = g.param(Tensor::matrix(1, 1, vec![3.0]));
    let t = g.constant(Tensor::matrix(1, 1, vec![1.0]));
    let scalar = loss_recon(&mut g, &[term(p, t)], &[]).unwrap();
    let same = loss_recon(&mut g, &[term(p, p)], &[]).unwrap();
    let pm = g.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 0.0, 4.0]));
    let tm = g.constant(Tensor::matrix(2, 2, vec![0.0, 2.0, 3.0, 4.0]));
    let half = loss_recon(
        &mut g,
        &[ReconTerm {
            pred: pm,
            target: tm,
            rows: Some(vec![1]),
        }],
        &[],
    )
    .unwrap();
    let p1 = g.param(Tensor::matrix(1, 2, vec![0.0, 4.0]));
    let t1 = g.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]));
    let alone = loss_recon(&mut g, &[term(p1, t1)], &[]).unwrap();
    let masked_err = loss_recon(
        &mut g,
        &[ReconTerm {
            pred: pm,
            target: tm,
            rows: Some(vec![]),
        }],
        &[],
    )
    .is_err();
    let recon_ok = g.value(scalar).item() == 2.0
        && g.value(same).item() == 0.0
        && g.value(half).item() == g.value(alone).item()
        && masked_err;

    let one_a = g.param(Tensor::matrix(1, 3, vec![0.3, -1.0, 2.0]));
    let one_b = g.param(Tensor::matrix(1, 3, vec![1.0, 0.5, 0.1]));
    let b1 = loss_align(&mut g, &[one_a, one_b], Similarity::Raw, 1.0).unwrap();
    let b1 = g.value(b1).item();
    let b1c = loss_align(&mut g, &[one_a, one_b], Similarity::Cosine, 0.1).unwrap();
    let b1c = g.value(b1c).item();
    let e = g.param(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let e2 = g.param(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let two = loss_align(&mut g, &[e, e2], Similarity::Raw, 1.0).unwrap();
    let two = g.value(two).item();
    let want = (1.0 + (-1.0f64).exp()).ln();
    let align_ok = b1 == 0.0 && b1c == 0.0 && (two - want).abs() <= 1e-9;
    (
        recon_ok && align_ok,
        format!("recon fixtures exact: {recon_ok}; align B=1 -> {b1:e}, 2x2 -> {two:.12} (want {want:.12})"),
    )
}

fn metric_fixtures() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let tau = random_vec(&mut rng, 50, 10.0);
        let hat: Vec<f64> = tau.iter().map(|x| 2.0 * x + 5.0).collect();
        worst = worst.max((pearson(&hat, &tau).unwrap() - 1.0).abs());
    }
    let r = rmse(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
    let pcc = pcc_channels(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1);
    let rmse_ok = (r - (5.0f64 / 3.0).sqrt()).abs() <= 1e-12;
    let guard = pcc.guarded == vec![0] && pcc.values == vec![0.0];
    (
        worst <= 1e-12 && rmse_ok && guard,
        format!("affine PCC max dev {worst:.1e}; RMSE {r:.15} vs sqrt(5/3); guard triggered: {guard}"),
    )
}

// ---------------------------------------------------------------- training

struct Runs {
    full: BTreeMap<u64, (Model, EvalReport, Duration)>,
    a_only: BTreeMap<u64, EvalReport>,
}

fn eval_full(model: &Model, ds: &Dataset) -> EvalReport {
    evaluate(model, ds, Split::Test, &[], true).unwrap()
}

fn train_runs(ds: &Dataset) -> Runs {
    let mut full = BTreeMap::new();
    let mut a_only = BTreeMap::new();
    for seed in SEEDS {
        let mut cfg = HdysConfig::desk();
        cfg.train.seed = seed;
        let out = train(&cfg, ds).unwrap();
        let report = eval_full(&out.model, ds);
        eprintln!("  seed {seed}: trained in {:.0}s", out.elapsed.as_secs_f64());
        full.insert(seed, (out.model, report, out.elapsed));

        cfg.data.profiles = vec!["A".into()];
        let view = ds.with_manifest(restrict_profiles(&ds.manifest, &cfg.data.profiles).unwrap());
        let out = train(&cfg, &view).unwrap();
        a_only.insert(seed, evaluate(&out.model, ds, Split::Test, &["A".to_string()], false).unwrap());
    }
    Runs { full, a_only }
}

fn overfit() -> Check {
    let profiles = default_profiles()
        .into_iter()
        .filter(|p| p.id == "A")
        .map(|mut p| {
            p.train_count = 1;
            p.test_count = 1;
            p
        })
        .collect();
    let m = DatasetManifest::new(0, profiles).unwrap();
    let ds = Dataset::from_records(m.clone(), generate_profiles(&m).unwrap());
    let frames = ds.get(&m.splits["A"].train[0]).unwrap().frames();
    let mut cfg = HdysConfig::desk();
    cfg.train.epochs = 500;
    let out = train(&cfg, &ds).unwrap();
    let first = out.curve[0].recon;
    let last = out.curve[499].recon;
    (
        last < 0.1 * first,
        format!("{frames}-frame sequence: recon {first:.4} -> {last:.4} ({:.1}%)", 100.0 * last / first),
    )
}

fn reduction(r: &ProfileReport, row: &hdys::engine::MetricRow) -> f64 {
    1.0 - row.mpje / r.zero.mpje
}

fn beats_zero(runs: &Runs) -> Check {
    let total: Duration = runs.full.values().map(|r| r.2).sum();
    let mut ok = total < Duration::from_secs(30 * 60);
    let mut parts = vec![format!("3 seeds trained in {:.1} min", total.as_secs_f64() / 60.0)];
    for p in ["A", "B"] {
        let mut cells = Vec::new();
        for (seed, (_, rep, _)) in &runs.full {
            let pr = rep.profile(p).unwrap();
            let avg = reduction(pr, pr.avg());
            let best = reduction(pr, &pr.best);
            ok &= avg.max(best) >= 0.5;
            cells.push(format!("s{seed} avg {:.0}% {} {:.0}%", 100.0 * avg, pr.best.representation, 100.0 * best));
        }
        parts.push(format!("{p}: {}", cells.join(", ")));
    }
    (ok, parts.join("; "))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn heterogeneity_a(runs: &Runs) -> Check {
    let multi: Vec<f64> = runs.full.values().map(|r| r.1.profile("A").unwrap().avg().mpje).collect();
    let single: Vec<f64> = runs.a_only.values().map(|r| r.profile("A").unwrap().avg().mpje).collect();
    let (m, s) = (median(multi.clone()), median(single.clone()));
    (
        m < s,
        format!("profile A median mPJE multi {m:.5} {multi:.5?} vs A-only {s:.5} {single:.5?}"),
    )
}

fn heterogeneity_b(runs: &Runs, ds: &Dataset) -> Check {
    let mut cfg = HdysConfig::desk();
    cfg.ablation.no_align = true;
    let out = train(&cfg, ds).unwrap();
    let no_align = eval_full(&out.model, ds).latent_cosine_mean;
    let aligned = runs.full[&0].1.latent_cosine_mean;
    (
        no_align < aligned,
        format!("held-out same-frame latent cosine: no_align {no_align:.4} vs aligned {aligned:.4}"),
    )
}

fn sci(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", cells.join(", "))
}

fn rollouts(runs: &Runs, ds: &Dataset) -> Check {
    let model = &runs.full[&0].0;
    let ks = [1, 2, 3, 4, 5];
    let r = rollout_eval(model, ds, &ks, &[90.0, 150.0]).unwrap();
    let oracle_worst = r
        .cells
        .iter()
        .filter(|c| c.source == TorqueSource::Oracle)
        .map(|c| c.max_mse)
        .fold(0.0, f64::max);
    let pred = |fps: f64| -> Vec<f64> { ks.iter().map(|&k| r.cell(TorqueSource::Predicted, fps, k).unwrap().mse).collect() };
    let (p90, p150) = (pred(90.0), pred(150.0));
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
    let finer = (1..5).all(|i| p150[i] <= p90[i]);
    let diverged: usize = r.cells.iter().map(|c| c.diverged).sum();
    (
        oracle_worst <= 1e-12 && monotone(&p90) && monotone(&p150) && finer,
        format!(
            "oracle max {oracle_worst:.1e}; predicted 90fps {}; 150fps {}; diverged {diverged}",
            sci(&p90),
            sci(&p150)
        ),
    )
}

// ---------------------------------------------------------------- reproduction and grid

const TINY: &[&str] = &[
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
    "train.epochs=3",
    "rollout.start_stride=30",
    "ablation.epochs=1",
];

fn small_manifest(train: usize, test: usize) -> DatasetManifest {
    let profiles = default_profiles()
        .into_iter()
        .map(|mut p| {
            p.train_count = train;
            p.test_count = test;
            p.duration_s = 1.0;
            p
        })
        .collect();
    DatasetManifest::new(0, profiles).unwrap()
}

fn reproduce(dir: &Path) -> Check {
    let root = dir.join("data");
    let m = small_manifest(2, 1);
    write_dataset(&root, &m, &generate_profiles(&m).unwrap()).unwrap();
    let mut args: Vec<String> = vec!["--set".into(), format!("data.root={}", root.display())];
    for s in TINY {
        args.extend(["--set".to_string(), s.to_string()]);
    }
    let mut notes = Vec::new();
    let mut ok = true;
    for (study, csv) in [
        ("table1-analogue", "ablation.csv"),
        ("table2-analogue", "table2.csv"),
        ("rollout-table", "rollout.csv"),
    ] {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let out = dir.join(format!("{study}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_hdysctl"))
                .args(["reproduce", study, "--seed", "5", "--out"])
                .arg(&out)
                .args(&args)
                .output()
                .unwrap();
            if !status.status.success() {
                return (false, format!("{study}: {}", String::from_utf8_lossy(&status.stderr)));
            }
            bytes.push(std::fs::read(out.join(csv)).unwrap());
        }
        let same = bytes[0] == bytes[1];
        ok &= same;
        notes.push(format!("{csv} identical: {same}"));
    }
    (ok, notes.join(", "))
}

fn checkpoint_round_trip(runs: &Runs, dir: &Path) -> Check {
    let model = &runs.full[&0].0;
    model.save(dir, "seed0").unwrap();
    let bytes = std::fs::read(dir.join("seed0.ckpt")).unwrap();
    let back = Model::load(&dir.join("seed0.ckpt")).unwrap();
    let same = back.checkpoint().encode() == bytes && bytes == model.checkpoint().encode();
    (same, format!("{} bytes, reloaded encoding identical: {same}", bytes.len()))
}

fn ablation_grid_check() -> Check {
    let m = small_manifest(6, 2);
    let ds = Dataset::from_records(m.clone(), generate_profiles(&m).unwrap());
    let mut cfg = HdysConfig::desk();
    cfg.suite.epochs = 2;
    let report = ablation_suite(&cfg, &ds, &[0], 1, |_| {}).unwrap();
    let csv = report.to_csv();
    let count = |run: &str| report.find(run, 0).unwrap().parameters;
    let (c32, c64, c128) = (count("d32"), count("d64"), count("d128"));
    let flags = ["no_fdae", "no_align", "no_temporal_refinement"];
    let rows_present = flags.iter().all(|f| csv.lines().any(|l| l.starts_with(&format!("{f},flag,0,A,"))));
    let reused = report.runs.iter().filter(|r| r.reused_from.is_some()).count();
    (
        report.runs.len() == 20 && c32 < c64 && c64 < c128 && rows_present,
        format!(
            "{} runs ({reused} reused), params d32 {c32} < d64 {c64} < d128 {c128}, flag rows present: {rows_present}",
            report.runs.len()
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut suite = Suite { filters, results: Vec::new() };
    let scratch = tempfile::tempdir().unwrap();

    suite.run("autodiff-gradcheck", autodiff);
    suite.run("physics-round-trip", physics_round_trip);
    suite.run("physics-pendulum-static", physics_pendulum);
    suite.run("physics-mass-matrix", physics_mass_matrix);
    suite.run("muscle-oracle", muscle_oracle);
    suite.run("repr-finite-differences", finite_differences);
    suite.run("repr-set-permutation", set_encoder_invariance);
    suite.run("loss-fixtures", loss_fixtures);
    suite.run("metric-fixtures", metric_fixtures);
    suite.run("determinism-reproduce", || reproduce(scratch.path()));
    suite.run("ablation-grid", ablation_grid_check);
    suite.run("train-overfit", overfit);

    let heavy = ["repr-dataset-io", "train-beats-zero", "hetero-a", "hetero-b", "rollout", "determinism-checkpoint"];
    if heavy.iter().any(|h| suite.wants(h)) {
        let t = Instant::now();
        let m = DatasetManifest::default_desk(0);
        let ds = Dataset::from_records(m.clone(), generate_profiles(&m).unwrap());
        eprintln!("desk corpus: {} sequences in {:.0}s", ds.records.len(), t.elapsed().as_secs_f64());
        suite.run("repr-dataset-io", || dataset_io(&ds));
        let needs_runs = heavy[1..].iter().any(|h| suite.wants(h));
        if needs_runs {
            let runs = train_runs(&ds);
            suite.run("train-beats-zero", || beats_zero(&runs));
            suite.run("hetero-a-multi-beats-single", || heterogeneity_a(&runs));
            suite.run("hetero-b-align-raises-cosine", || heterogeneity_b(&runs, &ds));
            suite.run("rollout-properties", || rollouts(&runs, &ds));
            suite.run("determinism-checkpoint", || checkpoint_round_trip(&runs, scratch.path()));
        }
    }

    let failed: Vec<&str> = suite.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed",
        suite.results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
