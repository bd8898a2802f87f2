//! Inverse and forward dynamics in world-frame spatial algebra.
//!
//! Spatial vectors are stacked `[angular; linear]` and referred to the world
//! origin, so no frame changes are needed between bodies. Gravity enters as a
//! fictitious upward base acceleration.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix6, Point3, Vector3, Vector6};

use crate::error::{RbdError, Result};
use crate::kinematics::dof_frames;
use crate::tree::{DofKind, KinematicTree};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
}

impl GeneralizedState {
    pub fn zeros(n: usize) -> Self {
        GeneralizedState {
            q: vec![0.0; n],
            qd: vec![0.0; n],
            qdd: vec![0.0; n],
        }
    }

    pub fn new(q: Vec<f64>, qd: Vec<f64>, qdd: Vec<f64>) -> Self {
        GeneralizedState { q, qd, qdd }
    }

    pub fn validate(&self, tree: &KinematicTree) -> Result<()> {
        tree.check_len("q", &self.q)?;
        tree.check_len("qd", &self.qd)?;
        tree.check_len("qdd", &self.qdd)
    }
}

/// Force and moment (world axes) applied at a point fixed on a link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalForce {
    pub link: usize,
    /// Application point in the link frame.
    pub point: [f64; 3],
    pub force: [f64; 3],
    pub torque: [f64; 3],
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn ang(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

fn lin(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

fn stack(a: Vector3<f64>, b: Vector3<f64>) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

fn cross_motion(v: &Vector6<f64>, u: &Vector6<f64>) -> Vector6<f64> {
    let (w, vo) = (ang(v), lin(v));
    stack(w.cross(&ang(u)), w.cross(&lin(u)) + vo.cross(&ang(u)))
}

fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (w, vo) = (ang(v), lin(v));
    stack(w.cross(&ang(f)) + vo.cross(&lin(f)), w.cross(&lin(f)))
}

/// Spatial inertia about the world origin of a body with world COM `c` and
/// world-axis rotational inertia `ic` about that COM.
fn spatial_inertia(mass: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + mass * cx * cx.transpose()));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * cx));
    m.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(mass * cx.transpose()));
    m.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(mass * Matrix3::identity()));
    m
}

struct Kin {
    frames: Vec<Isometry3<f64>>,
    subspace: Vec<Vector6<f64>>,
    inertia: Vec<Option<Matrix6<f64>>>,
}

fn kin(tree: &KinematicTree, q: &[f64]) -> Kin {
    let frames = dof_frames(tree, q);
    let mut subspace = Vec::with_capacity(frames.len());
    let mut inertia = Vec::with_capacity(frames.len());
    for (d, f) in tree.dofs().iter().zip(&frames) {
        let s = f.rotation * d.axis;
        subspace.push(match d.kind {
            DofKind::Revolute => stack(s, f.translation.vector.cross(&s)),
            DofKind::Prismatic => stack(Vector3::zeros(), s),
        });
        inertia.push(d.body.as_ref().map(|b| {
            let r = f.rotation.to_rotation_matrix();
            let c = (f * Point3::from(b.com)).coords;
            spatial_inertia(b.mass, &c, &(r * b.inertia * r.transpose()))
        }));
    }
    Kin {
        frames,
        subspace,
        inertia,
    }
}

fn rnea_core(
    tree: &KinematicTree,
    k: &Kin,
    qd: &[f64],
    qdd: &[f64],
    gravity: &Vector3<f64>,
    ext: &[ExternalForce],
) -> Result<Vec<f64>> {
    let dofs = tree.dofs();
    let n = dofs.len();
    let base_acc = stack(Vector3::zeros(), -gravity);
    let mut vel = vec![Vector6::zeros(); n];
    let mut acc = vec![Vector6::zeros(); n];
    let mut force = vec![Vector6::zeros(); n];
    for i in 0..n {
        let (vp, ap) = match dofs[i].parent {
            Some(p) => (vel[p], acc[p]),
            None => (Vector6::zeros(), base_acc),
        };
        let sqd = k.subspace[i] * qd[i];
        vel[i] = vp + sqd;
        acc[i] = ap + k.subspace[i] * qdd[i] + cross_motion(&vel[i], &sqd);
        if let Some(inertia) = &k.inertia[i] {
            force[i] = inertia * acc[i] + cross_force(&vel[i], &(inertia * vel[i]));
        }
    }
    for e in ext {
        if e.link >= tree.links().len() {
            return Err(RbdError::InvalidTree(format!("external force on missing link {}", e.link)));
        }
        let body = tree.link_dof_range(e.link).end - 1;
        let p = (k.frames[body] * Point3::from(Vector3::from(e.point))).coords;
        let f = Vector3::from(e.force);
        let t = Vector3::from(e.torque);
        if !(f.iter().chain(t.iter()).chain(p.iter()).all(|v| v.is_finite())) {
            return Err(RbdError::NonFinite("external force"));
        }
        force[body] -= stack(t + p.cross(&f), f);
    }
    let mut tau = vec![0.0; n];
    for i in (0..n).rev() {
        tau[i] = k.subspace[i].dot(&force[i]);
        if let Some(p) = dofs[i].parent {
            let fi = force[i];
            force[p] += fi;
        }
    }
    Ok(tau)
}

/// Generalized forces `M(q) q̈ + C(q, q̇) + G(q) − Jᵀλ`.
///
/// For a free-root tree the first six entries are the residual root wrench.
pub fn rnea(tree: &KinematicTree, state: &GeneralizedState, ext: &[ExternalForce]) -> Result<Vec<f64>> {
    state.validate(tree)?;
    let k = kin(tree, &state.q);
    rnea_core(tree, &k, &state.qd, &state.qdd, &tree.gravity, ext)
}

/// Composite-rigid-body mass matrix.
pub fn mass_matrix(tree: &KinematicTree, q: &[f64]) -> Result<DMatrix<f64>> {
    tree.check_len("q", q)?;
    Ok(crba(tree, &kin(tree, q)))
}

fn crba(tree: &KinematicTree, k: &Kin) -> DMatrix<f64> {
    let dofs = tree.dofs();
    let n = dofs.len();
    let mut composite: Vec<Matrix6<f64>> = k
        .inertia
        .iter()
        .map(|i| i.unwrap_or_else(Matrix6::zeros))
        .collect();
    for i in (0..n).rev() {
        if let Some(p) = dofs[i].parent {
            let c = composite[i];
            composite[p] += c;
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let f = composite[i] * k.subspace[i];
        m[(i, i)] = k.subspace[i].dot(&f);
        let mut j = dofs[i].parent;
        while let Some(jj) = j {
            let v = k.subspace[jj].dot(&f);
            m[(i, jj)] = v;
            m[(jj, i)] = v;
            j = dofs[jj].parent;
        }
    }
    m
}

/// Joint accelerations produced by `tau` and `ext` at `(q, q̇)`.
pub fn forward_dynamics(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    ext: &[ExternalForce],
) -> Result<Vec<f64>> {
    tree.check_len("q", q)?;
    tree.check_len("qd", qd)?;
    tree.check_len("tau", tau)?;
    let k = kin(tree, q);
    let zero = vec![0.0; q.len()];
    let bias = rnea_core(tree, &k, qd, &zero, &tree.gravity, ext)?;
    let m = crba(tree, &k);
    let rhs = DVector::from_iterator(q.len(), tau.iter().zip(&bias).map(|(t, b)| t - b));
    let chol = m.cholesky().ok_or(RbdError::SingularMassMatrix)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// One semi-implicit Euler step: velocity first, then position with the new velocity.
pub fn step(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    ext: &[ExternalForce],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(RbdError::NonFinite("dt"));
    }
    let qdd = forward_dynamics(tree, q, qd, tau, ext).map_err(|e| match e {
        RbdError::NonFinite(_) => RbdError::Diverged { step: 0 },
        other => other,
    })?;
    let qd1: Vec<f64> = qd.iter().zip(&qdd).map(|(v, a)| v + dt * a).collect();
    let q1: Vec<f64> = q.iter().zip(&qd1).map(|(x, v)| x + dt * v).collect();
    if q1.iter().chain(&qd1).any(|v| !v.is_finite()) {
        return Err(RbdError::Diverged { step: 0 });
    }
    Ok((q1, qd1))
}

/// Integrates a torque sequence from `(q0, q̇0)`; returns the visited
/// configurations after each step.
pub fn simulate(
    tree: &KinematicTree,
    q0: &[f64],
    qd0: &[f64],
    taus: &[Vec<f64>],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut q = q0.to_vec();
    let mut qd = qd0.to_vec();
    let mut out = Vec::with_capacity(taus.len());
    for (i, tau) in taus.iter().enumerate() {
        let (q1, qd1) = step(tree, &q, &qd, tau, &[], dt).map_err(|e| match e {
            RbdError::Diverged { .. } => RbdError::Diverged { step: i },
            other => other,
        })?;
        q = q1;
        qd = qd1;
        out.push(q.clone());
    }
    Ok(out)
}

pub fn kinetic_energy(tree: &KinematicTree, q: &[f64], qd: &[f64]) -> Result<f64> {
    tree.check_len("qd", qd)?;
    let m = mass_matrix(tree, q)?;
    let v = DVector::from_column_slice(qd);
    Ok(0.5 * v.dot(&(&m * &v)))
}

pub fn potential_energy(tree: &KinematicTree, q: &[f64]) -> Result<f64> {
    tree.check_len("q", q)?;
    let frames = dof_frames(tree, q);
    Ok(tree
        .dofs()
        .iter()
        .zip(&frames)
        .filter_map(|(d, f)| d.body.as_ref().map(|b| (b, f)))
        .map(|(b, f)| -b.mass * tree.gravity.dot(&(f * Point3::from(b.com)).coords))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{JointType, Link, Origin};

    const G: f64 = 9.81;

    fn pendulum(m: f64, lc: f64, izz: f64) -> KinematicTree {
        let l = Link::new(
            "bob",
            None,
            JointType::Revolute,
            [0.0, 0.0, 1.0],
            Origin::default(),
            m,
            [0.0, -lc, 0.0],
            [izz, izz, izz],
        );
        KinematicTree::new(vec![l], [0.0, -G, 0.0], vec![], None).unwrap()
    }

    #[test]
    fn static_pendulum_torque() {
        let (m, lc) = (1.7, 0.35);
        let tree = pendulum(m, lc, 0.02);
        for &q in &[0.0, 0.3, -1.1, 2.5] {
            let s = GeneralizedState::new(vec![q], vec![0.0], vec![0.0]);
            let tau = rnea(&tree, &s, &[]).unwrap()[0];
            assert!((tau - m * G * lc * q.sin()).abs() < 1e-12, "{tau}");
        }
    }

    #[test]
    fn pendulum_inertia() {
        let (m, lc, izz) = (1.7, 0.35, 0.02);
        let tree = pendulum(m, lc, izz);
        let mm = mass_matrix(&tree, &[0.9]).unwrap();
        assert!((mm[(0, 0)] - (m * lc * lc + izz)).abs() < 1e-14);
    }

    #[test]
    fn hanging_pendulum_acceleration() {
        let (m, lc, izz) = (2.0, 0.5, 0.03);
        let tree = pendulum(m, lc, izz);
        let q = 0.4;
        let qdd = forward_dynamics(&tree, &[q], &[0.0], &[0.0], &[]).unwrap()[0];
        let expect = -(m * G * lc / (m * lc * lc + izz)) * q.sin();
        assert!((qdd - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_everything_is_zero() {
        let tree = pendulum(1.0, 0.3, 0.01).with_gravity([0.0; 3]);
        let s = GeneralizedState::new(vec![0.7], vec![0.0], vec![0.0]);
        assert_eq!(rnea(&tree, &s, &[]).unwrap(), vec![0.0]);
        let qdd = forward_dynamics(&tree, &[0.7], &[0.0], &[0.0], &[]).unwrap();
        assert_eq!(qdd, vec![0.0]);
    }

    #[test]
    fn free_drift_step() {
        let tree = pendulum(1.0, 0.3, 0.01).with_gravity([0.0; 3]);
        let (q1, qd1) = step(&tree, &[0.2], &[1.5], &[0.0], &[], 0.01).unwrap();
        assert!((qd1[0] - 1.5).abs() < 1e-15);
        assert!((q1[0] - (0.2 + 0.015)).abs() < 1e-15);
    }

    #[test]
    fn external_force_balances_gravity() {
        // Push up at the COM with exactly the weight: no joint torque needed.
        let (m, lc) = (1.3, 0.4);
        let tree = pendulum(m, lc, 0.02);
        let push = ExternalForce {
            link: 0,
            point: [0.0, -lc, 0.0],
            force: [0.0, m * G, 0.0],
            torque: [0.0; 3],
        };
        let s = GeneralizedState::new(vec![0.8], vec![0.0], vec![0.0]);
        assert!(rnea(&tree, &s, &[push]).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn non_finite_state_rejected() {
        let tree = pendulum(1.0, 0.3, 0.01);
        let s = GeneralizedState::new(vec![f64::NAN], vec![0.0], vec![0.0]);
        assert!(matches!(rnea(&tree, &s, &[]), Err(RbdError::NonFinite("q"))));
        assert!(step(&tree, &[0.0], &[0.0], &[0.0], &[], 0.0).is_err());
    }
}
