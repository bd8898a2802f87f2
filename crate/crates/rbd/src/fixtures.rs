//! Small reference systems shared by tests, examples and the acceptance suite.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;

use crate::muscle::{Muscle, MuscleSet};
use crate::tree::{JointType, KinematicTree, Link, MarkerSite, Origin};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Planar pendulum hinged about world z, hanging along −y under gravity −y.
/// A marker sits at the tip (twice the COM distance).
pub fn pendulum(mass: f64, lc: f64, izz: f64) -> KinematicTree {
    let link = Link::new(
        "bob",
        None,
        JointType::Revolute,
        [0.0, 0.0, 1.0],
        Origin::default(),
        mass,
        [0.0, -lc, 0.0],
        [izz, izz, izz],
    );
    let tip = MarkerSite {
        link: 0,
        offset: [0.0, -2.0 * lc, 0.0],
    };
    KinematicTree::new(vec![link], [0.0, -STANDARD_GRAVITY, 0.0], vec![tip], None).expect("valid pendulum")
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Physically consistent rotational inertia: principal moments obeying the
/// triangle inequality, rotated by a random orientation.
fn random_inertia<R: Rng>(rng: &mut R, mass: f64) -> [[f64; 3]; 3] {
    let dims: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..0.4)).collect();
    let d = [
        mass / 12.0 * (dims[1] * dims[1] + dims[2] * dims[2]),
        mass / 12.0 * (dims[0] * dims[0] + dims[2] * dims[2]),
        mass / 12.0 * (dims[0] * dims[0] + dims[1] * dims[1]),
    ];
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(random_unit(rng)), rng.gen_range(0.0..3.0));
    let i = r.matrix() * nalgebra::Matrix3::from_diagonal(&Vector3::from(d)) * r.matrix().transpose();
    let i = (i + i.transpose()) * 0.5;
    [
        [i[(0, 0)], i[(0, 1)], i[(0, 2)]],
        [i[(1, 0)], i[(1, 1)], i[(1, 2)]],
        [i[(2, 0)], i[(2, 1)], i[(2, 2)]],
    ]
}

/// Random fixed-base serial chain of `n_links` links mixing revolute and
/// spherical joints, with two markers per link and gravity along −z.
pub fn random_chain<R: Rng>(rng: &mut R, n_links: usize) -> KinematicTree {
    let mut links = Vec::with_capacity(n_links);
    let mut markers = Vec::new();
    for i in 0..n_links {
        let mass = rng.gen_range(0.5..5.0);
        let joint = if rng.gen_bool(0.3) {
            JointType::Spherical
        } else {
            JointType::Revolute
        };
        let len = rng.gen_range(0.1..0.5);
        let origin = if i == 0 {
            Origin::default()
        } else {
            Origin {
                xyz: [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), -len],
                rpy: [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
            }
        };
        let mut link = Link::new(
            format!("l{i}"),
            i.checked_sub(1),
            joint,
            random_unit(rng).into(),
            origin,
            mass,
            [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), -rng.gen_range(0.05..0.25)],
            [1.0; 3],
        );
        link.inertia = random_inertia(rng, mass);
        links.push(link);
        for _ in 0..2 {
            markers.push(MarkerSite {
                link: i,
                offset: [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..0.0)],
            });
        }
    }
    KinematicTree::new(links, [0.0, 0.0, -STANDARD_GRAVITY], markers, None).expect("valid random chain")
}

/// Redundant one-coordinate actuator: two flexors of different strength and
/// one extensor.
pub fn three_muscle_fixture() -> MuscleSet {
    MuscleSet::new(vec![
        Muscle {
            name: "flexor_major".into(),
            moment_arms: vec![0.04],
            f_max: 1000.0,
        },
        Muscle {
            name: "flexor_minor".into(),
            moment_arms: vec![0.02],
            f_max: 800.0,
        },
        Muscle {
            name: "extensor".into(),
            moment_arms: vec![-0.03],
            f_max: 1200.0,
        },
    ])
    .expect("valid fixture")
}
