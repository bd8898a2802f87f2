use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::Result;
use crate::tree::{DofKind, KinematicTree};

/// World placement of every link plus derived point sets.
#[derive(Clone, Debug)]
pub struct FkResult {
    pub link_transforms: Vec<Isometry3<f64>>,
    /// Joint centers: the origin of each link's joint frame.
    pub joint_positions: Vec<Vector3<f64>>,
    pub markers: Vec<Vector3<f64>>,
}

/// World frame of each flattened DoF after its own motion.
pub(crate) fn dof_frames(tree: &KinematicTree, q: &[f64]) -> Vec<Isometry3<f64>> {
    let dofs = tree.dofs();
    let mut frames: Vec<Isometry3<f64>> = Vec::with_capacity(dofs.len());
    for (i, d) in dofs.iter().enumerate() {
        let parent = d.parent.map(|p| frames[p]).unwrap_or_else(Isometry3::identity);
        let pre = parent * d.origin;
        let motion = match d.kind {
            DofKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(d.axis), q[i]),
            ),
            DofKind::Prismatic => Isometry3::from_parts(
                Translation3::from(d.axis * q[i]),
                UnitQuaternion::identity(),
            ),
        };
        frames.push(pre * motion);
    }
    frames
}

pub fn forward_kinematics(tree: &KinematicTree, q: &[f64]) -> Result<FkResult> {
    tree.check_len("q", q)?;
    let frames = dof_frames(tree, q);
    let dofs = tree.dofs();
    let n = tree.links().len();
    let mut link_transforms = Vec::with_capacity(n);
    let mut joint_positions = Vec::with_capacity(n);
    for li in 0..n {
        let r = tree.link_dof_range(li);
        link_transforms.push(frames[r.end - 1]);
        let first = &dofs[r.start];
        let parent = first.parent.map(|p| frames[p]).unwrap_or_else(Isometry3::identity);
        joint_positions.push((parent * first.origin).translation.vector);
    }
    let markers = tree
        .markers()
        .iter()
        .map(|m| (link_transforms[m.link] * Point3::from(Vector3::from(m.offset))).coords)
        .collect();
    Ok(FkResult {
        link_transforms,
        joint_positions,
        markers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{JointType, Link, MarkerSite, Origin};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_moves_tip_onto_y() {
        let l = 0.7;
        let link = Link::new(
            "arm",
            None,
            JointType::Revolute,
            [0.0, 0.0, 1.0],
            Origin::default(),
            1.0,
            [l / 2.0, 0.0, 0.0],
            [0.01; 3],
        );
        let tip = MarkerSite {
            link: 0,
            offset: [l, 0.0, 0.0],
        };
        let tree = KinematicTree::new(vec![link], [0.0; 3], vec![tip], None).unwrap();
        let fk = forward_kinematics(&tree, &[FRAC_PI_2]).unwrap();
        assert!((fk.markers[0] - Vector3::new(0.0, l, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_pose_composes_fixed_transforms() {
        let mut links = vec![Link::new(
            "a",
            None,
            JointType::Spherical,
            [0.0, 0.0, 1.0],
            Origin {
                xyz: [0.1, 0.2, 0.3],
                rpy: [0.3, -0.2, 0.1],
            },
            1.0,
            [0.0; 3],
            [0.1; 3],
        )];
        links.push(Link {
            name: "b".into(),
            parent: Some(0),
            joint: JointType::Revolute,
            origin: Origin {
                xyz: [0.0, -0.4, 0.0],
                rpy: [0.0, 0.5, 0.0],
            },
            ..links[0].clone()
        });
        let tree = KinematicTree::new(links.clone(), [0.0; 3], vec![], None).unwrap();
        let fk = forward_kinematics(&tree, &[0.0; 4]).unwrap();
        let expect = links[0].origin.isometry() * links[1].origin.isometry();
        assert!((fk.link_transforms[1].to_homogeneous() - expect.to_homogeneous()).amax() < 1e-15);
        assert!((fk.joint_positions[1] - expect.translation.vector).norm() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let link = Link::new(
            "a",
            None,
            JointType::Revolute,
            [1.0, 0.0, 0.0],
            Origin::default(),
            1.0,
            [0.0; 3],
            [0.1; 3],
        );
        let tree = KinematicTree::new(vec![link], [0.0; 3], vec![], None).unwrap();
        assert!(forward_kinematics(&tree, &[0.0, 1.0]).is_err());
    }
}
