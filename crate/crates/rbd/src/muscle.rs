//! Linear muscle model `τ = Aᵀ (F_max ⊙ a)` and its minimum-norm inverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RbdError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Muscle {
    pub name: String,
    /// Moment arm (m) on each actuated coordinate.
    pub moment_arms: Vec<f64>,
    /// Maximum isometric force (N).
    pub f_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuscleSet {
    muscles: Vec<Muscle>,
}

impl MuscleSet {
    pub fn new(muscles: Vec<Muscle>) -> Result<Self> {
        let bad = |m: String| Err(RbdError::InvalidMuscles(m));
        let Some(first) = muscles.first() else {
            return bad("empty muscle set".into());
        };
        let width = first.moment_arms.len();
        for m in &muscles {
            if m.moment_arms.len() != width {
                return bad(format!("muscle {} has {} moment arms, expected {width}", m.name, m.moment_arms.len()));
            }
            if !(m.f_max > 0.0) || !m.f_max.is_finite() {
                return bad(format!("muscle {} max force must be positive", m.name));
            }
            if m.moment_arms.iter().any(|r| !r.is_finite()) {
                return bad(format!("muscle {} has non-finite moment arms", m.name));
            }
        }
        Ok(MuscleSet { muscles })
    }

    pub fn muscles(&self) -> &[Muscle] {
        &self.muscles
    }

    pub fn len(&self) -> usize {
        self.muscles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.muscles.is_empty()
    }

    /// Number of actuated coordinates the moment arms span.
    pub fn width(&self) -> usize {
        self.muscles[0].moment_arms.len()
    }

    pub(crate) fn check_width(&self, actuated: usize) -> Result<()> {
        if self.width() != actuated {
            return Err(RbdError::InvalidMuscles(format!(
                "moment arms span {} coordinates but the tree actuates {actuated}",
                self.width()
            )));
        }
        Ok(())
    }

    /// Columns are `F_max,i · r_i`, so `τ = B a`.
    pub fn force_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.width(), self.len(), |j, i| {
            self.muscles[i].f_max * self.muscles[i].moment_arms[j]
        })
    }
}

pub fn muscle_to_torque(ms: &MuscleSet, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != ms.len() {
        return Err(RbdError::LengthMismatch {
            what: "activations",
            expected: ms.len(),
            got: a.len(),
        });
    }
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(RbdError::ActivationOutOfRange { index, value });
    }
    let mut tau = vec![0.0; ms.width()];
    for (m, &ai) in ms.muscles.iter().zip(a) {
        let f = m.f_max * ai;
        for (t, r) in tau.iter_mut().zip(&m.moment_arms) {
            *t += r * f;
        }
    }
    Ok(tau)
}

/// Residual tolerance for accepting a solve.
pub const SOLVE_TOL: f64 = 1e-8;

/// Minimum-norm activations in `[0, 1]` reproducing `tau_target`.
///
/// Solves the dual of `min ½‖a‖² s.t. B a = τ, 0 ≤ a ≤ 1`, whose maximizer
/// gives `a = clip(Bᵀλ, 0, 1)`. The dual is concave and piecewise quadratic;
/// a damped semismooth Newton iteration finds it in a handful of steps. When
/// the target lies outside the reachable torque polytope the dual is
/// unbounded and the residual never closes, which is reported as infeasible.
pub fn solve_activations(ms: &MuscleSet, tau_target: &[f64]) -> Result<Vec<f64>> {
    let n = ms.width();
    if tau_target.len() != n {
        return Err(RbdError::LengthMismatch {
            what: "tau",
            expected: n,
            got: tau_target.len(),
        });
    }
    if tau_target.iter().any(|t| !t.is_finite()) {
        return Err(RbdError::NonFinite("tau"));
    }
    if ms.len() < n {
        return Err(RbdError::InvalidMuscles(format!(
            "{} muscles cannot span {n} coordinates",
            ms.len()
        )));
    }
    let b = ms.force_matrix();
    let tau = DVector::from_column_slice(tau_target);
    let bbt = &b * b.transpose();
    let scale = bbt.diagonal().amax().max(1e-300);
    let tol = SOLVE_TOL * (1.0 + tau.amax());

    let activations = |lam: &DVector<f64>| (b.transpose() * lam).map(|s| s.clamp(0.0, 1.0));
    let dual = |lam: &DVector<f64>| -> f64 {
        let s = b.transpose() * lam;
        lam.dot(&tau)
            - s.iter()
                .map(|&s| match s {
                    s if s <= 0.0 => 0.0,
                    s if s < 1.0 => 0.5 * s * s,
                    s => s - 0.5,
                })
                .sum::<f64>()
    };

    // Unconstrained minimum-norm start; exact whenever it is inside the box.
    let mut lam = match bbt.clone().cholesky() {
        Some(c) => c.solve(&tau),
        None => return Err(RbdError::InvalidMuscles("moment-arm matrix is rank deficient".into())),
    };
    let mut mu = 1e-10 * scale;
    for _ in 0..500 {
        let a = activations(&lam);
        let grad = &tau - &b * &a;
        if grad.amax() <= tol {
            return Ok(a.iter().copied().collect());
        }
        let s = b.transpose() * &lam;
        let mut h = DMatrix::<f64>::identity(n, n) * mu;
        for (i, &si) in s.iter().enumerate() {
            if si > 0.0 && si < 1.0 {
                let col = b.column(i);
                h += col * col.transpose();
            }
        }
        let Some(chol) = h.cholesky() else {
            mu *= 10.0;
            continue;
        };
        let dir = chol.solve(&grad);
        let g0 = dual(&lam);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &lam + &dir * t;
            if dual(&trial) >= g0 + 1e-4 * t * slope {
                lam = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if accepted {
            mu = (mu * 0.3).max(1e-12 * scale);
        } else {
            mu *= 10.0;
        }
        if !lam.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    let a = activations(&lam);
    let residual = (&tau - &b * &a).amax();
    if residual <= tol {
        return Ok(a.iter().copied().collect());
    }
    Err(RbdError::Infeasible { residual })
}
