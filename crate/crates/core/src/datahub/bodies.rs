//! The two reference trees, their marker sites and muscle sets.
//!
//! T1 is a 9-link lower-body chain with 23 angle coordinates; T2 is a 12-link
//! whole-body chain with 14 coordinates and different topology. Both are
//! fixed at the pelvis, z up, facing +x.

use hdys_rbd::{JointType, KinematicTree, Link, MarkerSite, Muscle, MuscleSet, Origin};

const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

/// A tree plus the nominal posture and motion range of each coordinate.
#[derive(Clone, Debug)]
pub struct BodyModel {
    pub name: &'static str,
    pub tree: KinematicTree,
    pub center: Vec<f64>,
    pub range: Vec<f64>,
    /// 0 for left/midline coordinates, 1 for right-side ones (gait phase).
    pub side: Vec<u8>,
}

struct Seg {
    name: &'static str,
    parent: Option<usize>,
    joint: JointType,
    axis: [f64; 3],
    at: [f64; 3],
    mass: f64,
    com: [f64; 3],
    inertia: [f64; 3],
    /// Segment extent along its own z for marker placement (signed).
    length: f64,
}

fn build(segs: &[Seg], markers_per_link: &[usize]) -> (Vec<Link>, Vec<MarkerSite>) {
    let links = segs
        .iter()
        .map(|s| {
            Link::new(
                s.name,
                s.parent,
                s.joint,
                s.axis,
                Origin::at(s.at[0], s.at[1], s.at[2]),
                s.mass,
                s.com,
                s.inertia,
            )
        })
        .collect();
    let mut sites = Vec::new();
    for (i, s) in segs.iter().enumerate() {
        let k = markers_per_link[i];
        for m in 0..k {
            // Spiral around the segment: alternate front/back and left/right.
            let frac = (m as f64 + 0.5) / k as f64;
            let ang = m as f64 * 2.3 + i as f64 * 0.7;
            sites.push(MarkerSite {
                link: i,
                offset: [0.07 * ang.cos(), 0.06 * ang.sin(), s.length * frac],
            });
        }
    }
    (links, sites)
}

fn leg(side: f64, pelvis: usize, base: usize, thigh_joint: JointType, foot_joint: JointType, names: [&'static str; 3], masses: [f64; 3]) -> Vec<Seg> {
    vec![
        Seg {
            name: names[0],
            parent: Some(pelvis),
            joint: thigh_joint,
            axis: [0.0, 1.0, 0.0],
            at: [0.0, 0.09 * side, -0.07],
            mass: masses[0],
            com: [0.0, 0.0, -0.18],
            inertia: [0.13, 0.13, 0.03],
            length: -0.42,
        },
        Seg {
            name: names[1],
            parent: Some(base),
            joint: JointType::Revolute,
            axis: [0.0, 1.0, 0.0],
            at: [0.0, 0.0, -0.42],
            mass: masses[1],
            com: [0.0, 0.0, -0.18],
            inertia: [0.05, 0.05, 0.006],
            length: -0.42,
        },
        Seg {
            name: names[2],
            parent: Some(base + 1),
            joint: foot_joint,
            axis: [0.0, 1.0, 0.0],
            at: [0.0, 0.0, -0.42],
            mass: masses[2],
            com: [0.05, 0.0, -0.04],
            inertia: [0.004, 0.01, 0.01],
            length: -0.08,
        },
    ]
}

/// Lower-body chain: pelvis, torso, head and two legs; hips, ankles and the
/// trunk are 3-DoF, knees are hinges.
pub fn t1() -> BodyModel {
    let mut segs = vec![
        Seg {
            name: "pelvis",
            parent: None,
            joint: JointType::Spherical,
            axis: [0.0, 0.0, 1.0],
            at: [0.0; 3],
            mass: 11.0,
            com: [0.0, 0.0, 0.03],
            inertia: [0.10, 0.08, 0.10],
            length: 0.1,
        },
        Seg {
            name: "torso",
            parent: Some(0),
            joint: JointType::Spherical,
            axis: [0.0, 0.0, 1.0],
            at: [0.0, 0.0, 0.10],
            mass: 25.0,
            com: [0.0, 0.0, 0.25],
            inertia: [1.0, 0.9, 0.35],
            length: 0.5,
        },
        Seg {
            name: "head",
            parent: Some(1),
            joint: JointType::Spherical,
            axis: [0.0, 0.0, 1.0],
            at: [0.0, 0.0, 0.50],
            mass: 5.0,
            com: [0.0, 0.0, 0.12],
            inertia: [0.03, 0.03, 0.02],
            length: 0.22,
        },
    ];
    segs.extend(leg(1.0, 0, 3, JointType::Spherical, JointType::Spherical, ["l_thigh", "l_shank", "l_foot"], [8.0, 3.5, 1.2]));
    segs.extend(leg(-1.0, 0, 6, JointType::Spherical, JointType::Spherical, ["r_thigh", "r_shank", "r_foot"], [8.0, 3.5, 1.2]));
    let (links, markers) = build(&segs, &[4, 6, 6, 4, 4, 4, 4, 4, 4]);
    let tree = KinematicTree::new(links, GRAVITY, markers, None).expect("T1 is valid");

    // Per-coordinate posture and range, in flattened order.
    let sph = |c: [f64; 3], r: [f64; 3]| (c.to_vec(), r.to_vec());
    let parts = [
        sph([0.0; 3], [0.06, 0.08, 0.1]),     // pelvis
        sph([0.0, 0.05, 0.0], [0.1, 0.15, 0.2]), // torso
        sph([0.0; 3], [0.1, 0.15, 0.25]),     // head
        sph([0.0, -0.1, 0.0], [0.08, 0.45, 0.1]), // l hip
        (vec![0.45], vec![0.45]),             // l knee
        sph([0.0, 0.05, 0.0], [0.08, 0.2, 0.08]), // l ankle
        sph([0.0, -0.1, 0.0], [0.08, 0.45, 0.1]),
        (vec![0.45], vec![0.45]),
        sph([0.0, 0.05, 0.0], [0.08, 0.2, 0.08]),
    ];
    let center: Vec<f64> = parts.iter().flat_map(|p| p.0.clone()).collect();
    let range: Vec<f64> = parts.iter().flat_map(|p| p.1.clone()).collect();
    let side: Vec<u8> = (0..23).map(|j| u8::from(j >= 16)).collect();
    let muscles = muscle_set(&tree, &t1_capacity(), &[(10, 12, 0.6), (16, 19, 0.6), (12, 14, 0.5), (19, 21, 0.5)]);
    BodyModel {
        name: "T1",
        tree: tree.with_muscles(muscles).expect("T1 muscles fit"),
        center,
        range,
        side,
    }
}

/// Whole-body chain with hinge legs, a two-hinge spine, head and arms.
pub fn t2() -> BodyModel {
    let hinge = |name, parent, axis, at, mass, com, inertia, length| Seg {
        name,
        parent: Some(parent),
        joint: JointType::Revolute,
        axis,
        at,
        mass,
        com,
        inertia,
        length,
    };
    let y = [0.0, 1.0, 0.0];
    let x = [1.0, 0.0, 0.0];
    let mut segs = vec![
        Seg {
            name: "pelvis",
            parent: None,
            joint: JointType::Spherical,
            axis: [0.0, 0.0, 1.0],
            at: [0.0; 3],
            mass: 10.0,
            com: [0.0, 0.0, 0.03],
            inertia: [0.09, 0.07, 0.09],
            length: 0.1,
        },
        hinge("spine", 0, y, [0.0, 0.0, 0.10], 12.0, [0.0, 0.0, 0.12], [0.25, 0.22, 0.1], 0.22),
        hinge("chest", 1, x, [0.0, 0.0, 0.22], 14.0, [0.0, 0.0, 0.15], [0.3, 0.25, 0.15], 0.32),
        hinge("head", 2, y, [0.0, 0.0, 0.32], 5.0, [0.0, 0.0, 0.12], [0.03, 0.03, 0.02], 0.22),
    ];
    let mut l = leg(1.0, 0, 4, JointType::Revolute, JointType::Revolute, ["l_thigh", "l_shin", "l_foot"], [9.0, 3.8, 1.1]);
    let mut r = leg(-1.0, 0, 7, JointType::Revolute, JointType::Revolute, ["r_thigh", "r_shin", "r_foot"], [9.0, 3.8, 1.1]);
    for s in l.iter_mut().chain(r.iter_mut()) {
        s.at[1] *= 1.1;
    }
    segs.extend(l);
    segs.extend(r);
    segs.push(hinge("l_arm", 2, y, [0.0, 0.2, 0.28], 4.0, [0.0, 0.0, -0.28], [0.08, 0.08, 0.01], -0.6));
    segs.push(hinge("r_arm", 2, y, [0.0, -0.2, 0.28], 4.0, [0.0, 0.0, -0.28], [0.08, 0.08, 0.01], -0.6));
    let (links, markers) = build(&segs, &[4; 12]);
    let tree = KinematicTree::new(links, GRAVITY, markers, None).expect("T2 is valid");
    let center = vec![0.0, 0.0, 0.0, 0.05, 0.0, 0.0, -0.1, 0.45, 0.05, -0.1, 0.45, 0.05, 0.0, 0.0];
    let range = vec![0.06, 0.08, 0.1, 0.2, 0.1, 0.2, 0.45, 0.45, 0.2, 0.45, 0.45, 0.2, 0.6, 0.6];
    let side = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1];
    let muscles = muscle_set(&tree, &t2_capacity(), &[(6, 7, 0.6), (9, 10, 0.6), (7, 8, 0.5), (10, 11, 0.5)]);
    BodyModel {
        name: "T2",
        tree: tree.with_muscles(muscles).expect("T2 muscles fit"),
        center,
        range,
        side,
    }
}

pub fn by_name(name: &str) -> Option<BodyModel> {
    match name {
        "T1" => Some(t1()),
        "T2" => Some(t2()),
        _ => None,
    }
}

/// Peak torque capacity (N·m) of each actuated coordinate, sized with a wide
/// margin over the largest oracle torque any default profile requests.
fn t1_capacity() -> Vec<f64> {
    let mut c = vec![0.0; 23];
    c[..3].copy_from_slice(&[900.0, 900.0, 500.0]);
    c[3..6].copy_from_slice(&[500.0, 500.0, 300.0]);
    c[6..9].copy_from_slice(&[60.0, 60.0, 40.0]);
    for base in [9, 16] {
        c[base..base + 3].copy_from_slice(&[400.0, 500.0, 200.0]);
        c[base + 3] = 250.0;
        c[base + 4..base + 7].copy_from_slice(&[60.0, 80.0, 60.0]);
    }
    c
}

fn t2_capacity() -> Vec<f64> {
    vec![
        900.0, 900.0, 500.0, 500.0, 400.0, 80.0, 500.0, 250.0, 80.0, 500.0, 250.0, 80.0, 150.0, 150.0,
    ]
}

const ARM: f64 = 0.05;

/// An agonist/antagonist pair per coordinate plus two-joint muscles given as
/// `(coordinate a, coordinate b, arm ratio on b)`.
fn muscle_set(tree: &KinematicTree, capacity: &[f64], biarticular: &[(usize, usize, f64)]) -> MuscleSet {
    let n = tree.actuated_dof();
    let names = coordinate_names(tree);
    let mut muscles = Vec::with_capacity(2 * n + biarticular.len());
    for j in 0..n {
        for (sign, tag) in [(1.0, "pos"), (-1.0, "neg")] {
            let mut arms = vec![0.0; n];
            arms[j] = sign * ARM;
            muscles.push(Muscle {
                name: format!("{}_{tag}", names[j]),
                moment_arms: arms,
                f_max: capacity[j] / ARM,
            });
        }
    }
    for &(a, b, ratio) in biarticular {
        let mut arms = vec![0.0; n];
        arms[a] = ARM;
        arms[b] = ratio * ARM;
        muscles.push(Muscle {
            name: format!("{}_{}_bi", names[a], names[b]),
            moment_arms: arms,
            f_max: 0.5 * capacity[a].min(capacity[b]) / ARM,
        });
    }
    MuscleSet::new(muscles).expect("valid muscle set")
}

/// Human-readable name of each flattened coordinate.
pub fn coordinate_names(tree: &KinematicTree) -> Vec<String> {
    let mut out = Vec::with_capacity(tree.dof_count());
    for l in tree.links() {
        match l.joint {
            JointType::Revolute => out.push(l.name.clone()),
            JointType::Spherical => out.extend(["x", "y", "z"].map(|a| format!("{}_r{a}", l.name))),
            JointType::Free => out.extend(["tx", "ty", "tz", "rx", "ry", "rz"].map(|a| format!("{}_{a}", l.name))),
        }
    }
    out
}

/// sEMG is recorded from the sagittal hip and knee muscles of both legs.
pub fn t1_emg_channels() -> Vec<usize> {
    // hip flexion is coordinate 10 (left) / 17 (right); knees 12 / 19
    [10usize, 12, 17, 19].iter().flat_map(|&j| [2 * j, 2 * j + 1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_shapes() {
        let a = t1();
        assert_eq!(a.tree.links().len(), 9);
        assert_eq!(a.tree.dof_count(), 23);
        assert_eq!(a.tree.markers().len(), 40);
        assert_eq!(a.center.len(), 23);
        assert_eq!(a.range.len(), 23);
        assert_eq!(coordinate_names(&a.tree)[10], "l_thigh_ry");
        assert_eq!(coordinate_names(&a.tree)[12], "l_shank");
        assert_eq!(coordinate_names(&a.tree)[19], "r_shank");
        let b = t2();
        assert_eq!(b.tree.links().len(), 12);
        assert_eq!(b.tree.dof_count(), 14);
        assert_eq!(b.tree.markers().len(), 48);
        assert_eq!(b.center.len(), 14);
        assert_eq!(b.side.len(), 14);
        assert_eq!(b.tree.muscles().unwrap().len(), 32);
        assert_eq!(a.tree.muscles().unwrap().len(), 50);
        assert_eq!(t1_emg_channels().len(), 8);
        assert!((a.tree.total_mass() - 66.4).abs() < 1e-9);
    }
}
