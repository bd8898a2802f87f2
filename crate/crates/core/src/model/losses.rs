//! Reconstruction (L1), InfoNCE alignment and their weighted total.

use hdys_numcore::{Binder, Graph, Tensor, Var};

use super::batch::GroupBatch;
use super::nn::Ctx;
use super::{Forward, Model};
use crate::config::{HdysConfig, Similarity};
use crate::error::{HdysError, Result};

/// One prediction/target pair restricted to `rows` (all rows when `None`).
pub struct ReconTerm {
    pub pred: Var,
    pub target: Var,
    pub rows: Option<Vec<usize>>,
}

/// Sum of absolute errors and the number of entries it covers.
fn abs_sum(g: &mut Graph, t: &ReconTerm) -> Result<Option<(Var, usize)>> {
    let (pred, target) = match &t.rows {
        Some(r) if r.is_empty() => return Ok(None),
        Some(r) => (g.gather_rows(t.pred, r.clone())?, g.gather_rows(t.target, r.clone())?),
        None => (t.pred, t.target),
    };
    let n = g.value(pred).numel();
    Ok(Some((g.l1_distance(pred, target)?, n)))
}

fn pooled_mae(g: &mut Graph, terms: &[ReconTerm]) -> Result<Option<Var>> {
    let mut sums = Vec::new();
    let mut count = 0;
    for t in terms {
        if let Some((s, n)) = abs_sum(g, t)? {
            sums.push(s);
            count += n;
        }
    }
    if sums.is_empty() {
        return Ok(None);
    }
    let total = sum_scalars(g, &sums)?.expect("non-empty");
    Ok(Some(g.scale(total, 1.0 / count as f64)?))
}

/// `Σ_kinds MAE(τ̂, τ) + MAE(q̈̂, q̈)`, with every acceleration target pooled
/// into one mean. Masked rows contribute nothing; nothing left at all is a
/// dead configuration.
pub fn loss_recon(g: &mut Graph, dynamics: &[ReconTerm], accel: &[ReconTerm]) -> Result<Var> {
    let mut parts = Vec::new();
    for t in dynamics {
        if let Some(m) = pooled_mae(g, std::slice::from_ref(t))? {
            parts.push(m);
        }
    }
    if let Some(m) = pooled_mae(g, accel)? {
        parts.push(m);
    }
    sum_scalars(g, &parts)?.ok_or_else(|| HdysError::DeadConfig("every reconstruction target is masked".into()))
}

fn sum_scalars(g: &mut Graph, parts: &[Var]) -> Result<Option<Var>> {
    let mut it = parts.iter();
    let Some(&first) = it.next() else { return Ok(None) };
    let mut acc = first;
    for &p in it {
        acc = g.add(acc, p)?;
    }
    Ok(Some(acc))
}

/// InfoNCE over ordered pairs of distinct sources, averaged over pairs and
/// frames. For sources `a, b` with similarity matrix `S = sim(z_a, z_b)`,
/// the `a → b` term is `mean_i [logsumexp_j S_ij − S_ii]` and `b → a` uses
/// the columns of the same matrix.
pub fn loss_align(g: &mut Graph, sources: &[Var], similarity: Similarity, temperature: f64) -> Result<Var> {
    if sources.len() < 2 {
        return Err(HdysError::Invalid("alignment needs at least two latent sources".into()));
    }
    let z: Vec<Var> = match similarity {
        Similarity::Cosine => sources.iter().map(|&s| g.l2_normalize(s)).collect::<std::result::Result<_, _>>()?,
        Similarity::Raw => sources.to_vec(),
    };
    let inv_t = 1.0 / temperature;
    let b = g.value(z[0]).rows();
    let eye = g.constant(Tensor::matrix(b, b, (0..b * b).map(|k| if k % (b + 1) == 0 { 1.0 } else { 0.0 }).collect()));
    let mut terms = Vec::new();
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let s = g.matmul_nt(z[i], z[j])?;
            let s = g.scale(s, inv_t)?;
            // positives read off the same matrix, so B = 1 gives exactly 0
            let masked = g.mul(s, eye)?;
            let diag = g.sum_cols(masked)?;
            let diag = g.mean(diag)?;
            let st = g.transpose(s)?;
            for m in [s, st] {
                let lse = g.log_sum_exp(m)?;
                let lse = g.mean(lse)?;
                terms.push(g.sub(lse, diag)?);
            }
        }
    }
    let n = terms.len() as f64;
    let total = sum_scalars(g, &terms)?.expect("at least one pair");
    Ok(g.scale(total, 1.0 / n)?)
}

/// `α₁·recon + α₂·align`; `no_align` drops the second term. With no term
/// left the configuration is dead.
pub fn total_loss(g: &mut Graph, cfg: &HdysConfig, recon: Option<Var>, align: Option<Var>) -> Result<Var> {
    let mut parts = Vec::new();
    if let Some(r) = recon {
        parts.push(g.scale(r, cfg.loss.alpha1)?);
    }
    if let Some(a) = align.filter(|_| !cfg.ablation.no_align) {
        parts.push(g.scale(a, cfg.loss.alpha2)?);
    }
    sum_scalars(g, &parts)?.ok_or_else(|| HdysError::DeadConfig("no loss term left for this batch".into()))
}

/// Scalar form of [`total_loss`].
pub fn total_loss_value(cfg: &HdysConfig, recon: f64, align: f64) -> f64 {
    let a = if cfg.ablation.no_align { 0.0 } else { cfg.loss.alpha2 * align };
    cfg.loss.alpha1 * recon + a
}

/// Loss of one profile group.
pub struct GroupLoss {
    pub total: Var,
    pub recon: Option<f64>,
    pub align: Option<f64>,
}

fn tile(t: &Tensor, times: usize) -> Tensor {
    let mut data = Vec::with_capacity(t.numel() * times);
    for _ in 0..times {
        data.extend_from_slice(t.data());
    }
    Tensor::matrix(t.rows() * times, t.cols(), data)
}

fn tiled_rows(rows: &[usize], per: usize, times: usize) -> Vec<usize> {
    (0..times).flat_map(|k| rows.iter().map(move |r| k * per + r)).collect()
}

/// Builds the graph for one group and its loss. Returns `Ok(None)` when
/// every term is masked for this group (for instance a kinematics-only
/// group with alignment switched off).
pub fn group_loss(model: &Model, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, batch: &GroupBatch) -> Result<Option<(GroupLoss, Forward)>> {
    let cfg = &model.cfg;
    let fwd = model.forward(g, p, ctx, batch, !cfg.ablation.no_fdae)?;
    let rows = batch.rows();
    let n_src = fwd.sources.len();
    let valid = Some(tiled_rows(&batch.valid_rows, rows, n_src));
    let mut dyn_terms = Vec::new();
    if let (Some(pred), Some(target)) = (fwd.tau_hat, &batch.dyn_target) {
        let target = g.constant(tile(target, n_src));
        dyn_terms.push(ReconTerm {
            pred,
            target,
            rows: valid.clone(),
        });
    }
    let mut acc_terms = Vec::new();
    for (c, pred) in &fwd.acc_hat {
        let (_, t) = batch.accel.iter().find(|(k, _)| k == c).expect("heads follow targets");
        let target = g.constant(tile(t, n_src));
        acc_terms.push(ReconTerm {
            pred: *pred,
            target,
            rows: valid.clone(),
        });
    }
    let recon = if dyn_terms.is_empty() && acc_terms.is_empty() {
        None
    } else {
        Some(loss_recon(g, &dyn_terms, &acc_terms)?)
    };
    let mut latents = fwd.z.clone();
    latents.extend(fwd.z_fd.iter().copied());
    let align = if !cfg.ablation.no_align && latents.len() >= 2 {
        Some(loss_align(g, &latents, cfg.loss.similarity, cfg.loss.temperature)?)
    } else {
        None
    };
    if recon.is_none() && align.is_none() {
        return Ok(None);
    }
    let total = total_loss(g, cfg, recon, align)?;
    let loss = GroupLoss {
        total,
        recon: recon.map(|r| g.value(r).item()),
        align: align.map(|a| g.value(a).item()),
    };
    Ok(Some((loss, fwd)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(g: &mut Graph, rows: usize, cols: usize, data: &[f64]) -> Var {
        g.param(Tensor::matrix(rows, cols, data.to_vec()))
    }

    #[test]
    fn recon_scalar_hand_value() {
        let mut g = Graph::new();
        let p = var(&mut g, 1, 1, &[3.0]);
        let t = var(&mut g, 1, 1, &[1.0]);
        let l = loss_recon(&mut g, &[ReconTerm { pred: p, target: t, rows: None }], &[]).unwrap();
        assert_eq!(g.value(l).item(), 2.0);
    }

    #[test]
    fn recon_identical_is_zero_and_all_masked_is_error() {
        let mut g = Graph::new();
        let p = var(&mut g, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = var(&mut g, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let l = loss_recon(&mut g, &[ReconTerm { pred: p, target: t, rows: None }], &[]).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let masked = ReconTerm {
            pred: p,
            target: t,
            rows: Some(vec![]),
        };
        assert!(matches!(loss_recon(&mut g, &[masked], &[]), Err(HdysError::DeadConfig(_))));
    }

    #[test]
    fn align_single_frame_is_zero() {
        let mut g = Graph::new();
        let a = var(&mut g, 1, 3, &[0.3, -1.0, 2.0]);
        let b = var(&mut g, 1, 3, &[1.0, 0.5, 0.1]);
        let l = loss_align(&mut g, &[a, b], Similarity::Cosine, 0.1).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
    }

    #[test]
    fn align_needs_two_sources() {
        let mut g = Graph::new();
        let a = var(&mut g, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(loss_align(&mut g, &[a], Similarity::Raw, 1.0).is_err());
    }

    #[test]
    fn total_follows_weights() {
        let mut cfg = HdysConfig::desk();
        assert!((total_loss_value(&cfg, 2.0, 1.0) - 0.07).abs() < 1e-15);
        cfg.ablation.no_align = true;
        assert_eq!(total_loss_value(&cfg, 2.0, 1.0), 0.01 * 2.0);
        let mut g = Graph::new();
        let a = var(&mut g, 1, 1, &[1.0]);
        assert!(matches!(total_loss(&mut g, &cfg, None, Some(a)), Err(HdysError::DeadConfig(_))));
    }
}
