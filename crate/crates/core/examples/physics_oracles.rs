//! Inverse/forward dynamics round trip on a random chain, a pendulum static
//! torque check, and the minimum-norm muscle split for a three-muscle joint.

use hdys_rbd::fixtures::{pendulum, random_chain, three_muscle_fixture, STANDARD_GRAVITY};
use hdys_rbd::{forward_dynamics, mass_matrix, muscle_to_torque, rnea, solve_activations, GeneralizedState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tree = random_chain(&mut rng, 4);
    let n = tree.dof_count();
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let qd: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let qdd = forward_dynamics(&tree, &q, &qd, &tau, &[]).unwrap();
    let back = rnea(&tree, &GeneralizedState::new(q.clone(), qd, qdd.clone()), &[]).unwrap();
    println!("random 4-link chain, {n} DoF");
    println!("  tau        {tau:.4?}");
    println!("  qdd        {qdd:.4?}");
    println!("  rnea(qdd)  {back:.4?}");
    println!("  mass matrix diagonal {:.4?}", mass_matrix(&tree, &q).unwrap().diagonal().as_slice());

    let (m, lc) = (3.0, 0.25);
    let p = pendulum(m, lc, 0.02);
    for q in [0.3f64, 1.0, 2.0] {
        let tau = rnea(&p, &GeneralizedState::new(vec![q], vec![0.0], vec![0.0]), &[]).unwrap()[0];
        println!("pendulum q={q:.1}: holding torque {tau:.6}, m g lc sin q = {:.6}", m * STANDARD_GRAVITY * lc * q.sin());
    }

    let muscles = three_muscle_fixture();
    for target in [20.0, -15.0] {
        let a = solve_activations(&muscles, &[target]).unwrap();
        let tau = muscle_to_torque(&muscles, &a).unwrap();
        println!("muscles for {target:+} Nm: activations {a:.4?} -> {:.6} Nm", tau[0]);
    }
}
