//! Finite-difference verification of kernel vector-Jacobian products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{Kernel, OpKind, CATALOG};
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub kind: String,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with a floor on the magnitude so that gradients that
/// are exactly zero compare on an absolute scale.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Random kernel instance and inputs in `[-2, 2]` for a catalog entry.
pub fn sample_case(name: &str, rng: &mut ChaCha8Rng) -> Result<(OpKind, Vec<Tensor>)> {
    let kind = OpKind::parse(name)?;
    let r = rng.gen_range(1..=2usize);
    let c = rng.gen_range(3..=4usize);
    Ok(match kind {
        OpKind::MatMul { .. } => {
            let (ta, tb) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
            let k = rng.gen_range(2..=3usize);
            let n = rng.gen_range(2..=3usize);
            let a = if ta { [k, r + 1] } else { [r + 1, k] };
            let b = if tb { [n, k] } else { [k, n] };
            (
                OpKind::MatMul {
                    trans_a: ta,
                    trans_b: tb,
                },
                vec![uniform(rng, &a), uniform(rng, &b)],
            )
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let a = uniform(rng, &[r + 1, c]);
            let b = match rng.gen_range(0..3) {
                0 => uniform(rng, &[r + 1, c]),
                1 => uniform(rng, &[c]),
                _ => uniform(rng, &[1]),
            };
            (kind, vec![a, b])
        }
        OpKind::Scale(_) => (OpKind::Scale(rng.gen_range(-2.0..2.0)), vec![uniform(rng, &[r, c])]),
        OpKind::Concat { .. } => {
            let axis = rng.gen_range(0..2usize);
            let (a, b) = if axis == 0 {
                ([r, c], [1, c])
            } else {
                ([r + 1, c], [r + 1, 2])
            };
            (OpKind::Concat { axis }, vec![uniform(rng, &a), uniform(rng, &b)])
        }
        OpKind::Slice { .. } => {
            let axis = rng.gen_range(0..2usize);
            let x = uniform(rng, &[3, c]);
            let len = if axis == 0 { 3 } else { c };
            let start = rng.gen_range(0..len - 1);
            let end = rng.gen_range(start + 1..=len);
            (OpKind::Slice { axis, start, end }, vec![x])
        }
        OpKind::GatherRows(_) => {
            let idx = (0..4).map(|_| rng.gen_range(0..3usize)).collect();
            (OpKind::GatherRows(idx), vec![uniform(rng, &[3, 2])])
        }
        OpKind::MeanGroups { .. } => (OpKind::MeanGroups { group: 2 }, vec![uniform(rng, &[4, 2])]),
        OpKind::Relu => {
            // keep away from the kink
            let mut x = uniform(rng, &[r, c]);
            for v in x.data_mut() {
                if v.abs() < 1e-2 {
                    *v += 0.1;
                }
            }
            (kind, vec![x])
        }
        OpKind::L1Distance => {
            let a = uniform(rng, &[r, c]);
            let mut b = uniform(rng, &[r, c]);
            for (bv, av) in b.data_mut().iter_mut().zip(a.data()) {
                if (*bv - av).abs() < 1e-2 {
                    *bv += 0.1;
                }
            }
            (kind, vec![a, b])
        }
        OpKind::Attention { .. } => {
            let groups = rng.gen_range(1..=2usize);
            let tokens = rng.gen_range(2..=3usize);
            let heads = rng.gen_range(1..=2usize);
            let dim = 2 * heads;
            let s = [groups * tokens, dim];
            (
                OpKind::Attention { groups, heads },
                vec![uniform(rng, &s), uniform(rng, &s), uniform(rng, &s)],
            )
        }
        OpKind::LayerNorm { .. }
        | OpKind::Softmax
        | OpKind::LogSumExp
        | OpKind::L2Normalize { .. }
        | OpKind::Gelu
        | OpKind::Silu
        | OpKind::Transpose
        | OpKind::SumCols
        | OpKind::MeanAll => (kind, vec![uniform(rng, &[r, c])]),
    })
}

/// Largest relative error between the kernel's VJP and central differences
/// of `<forward(inputs), w>` for a random weight `w`.
pub fn check_once(kernel: &dyn Kernel, inputs: &[Tensor], rng: &mut ChaCha8Rng) -> Result<f64> {
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let (out, cache) = kernel.forward(&refs)?;
    let w = uniform(rng, out.shape());
    let analytic = kernel.backward(&refs, &out, &cache, &w);
    let objective = |ins: &[Tensor]| -> Result<f64> {
        let r: Vec<&Tensor> = ins.iter().collect();
        let (o, _) = kernel.forward(&r)?;
        Ok(o.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
    };
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].numel() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + FD_STEP;
            let fp = objective(&work)?;
            work[i].data_mut()[j] = x0 - FD_STEP;
            let fm = objective(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(grad.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// Runs `trials` random checks of a catalog kernel.
pub fn grad_check(name: &str, trials: usize, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (kind, inputs) = sample_case(name, &mut rng)?;
        worst = worst.max(check_once(&kind, &inputs, &mut rng)?);
    }
    Ok(GradCheckReport {
        kind: name.to_string(),
        trials,
        max_rel_error: worst,
        tolerance,
        passed: worst <= tolerance,
    })
}

/// [`grad_check`] over the whole catalog.
pub fn grad_check_all(trials: usize, tolerance: f64, seed: u64) -> Vec<GradCheckReport> {
    CATALOG
        .iter()
        .enumerate()
        .map(|(i, name)| {
            grad_check(name, trials, tolerance, seed.wrapping_add(i as u64)).expect("catalog kind")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Kernel whose VJP is deliberately 10% too large.
    struct Corrupted(OpKind);

    impl Kernel for Corrupted {
        fn name(&self) -> &'static str {
            "corrupted"
        }
        fn forward(&self, inputs: &[&Tensor]) -> Result<(Tensor, Vec<f64>)> {
            self.0.forward(inputs)
        }
        fn backward(&self, i: &[&Tensor], o: &Tensor, c: &[f64], g: &Tensor) -> Vec<Tensor> {
            self.0
                .backward(i, o, c, g)
                .into_iter()
                .map(|mut t| {
                    t.data_mut().iter_mut().for_each(|v| *v *= 1.1);
                    t
                })
                .collect()
        }
    }

    #[test]
    fn matmul_and_attention_pass() {
        for name in ["matmul", "attention"] {
            let r = grad_check(name, 10, 1e-4, 7).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn corrupted_kernel_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (kind, inputs) = sample_case("matmul", &mut rng).unwrap();
        let err = check_once(&Corrupted(kind), &inputs, &mut rng).unwrap();
        assert!(err > 1e-4, "{err}");
    }

    #[test]
    fn unknown_kind_is_an_error() {
        assert!(grad_check("fft", 1, 1e-4, 0).is_err());
    }
}
