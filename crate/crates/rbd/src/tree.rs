//! Kinematic tree description, validation and the `rbd-tree/1` JSON format.
//!
//! Every joint is flattened into scalar degrees of freedom: a spherical joint
//! becomes three revolutes about the link's local x, y and z axes (in that
//! order) and a free root becomes three prismatic followed by three revolute
//! coordinates. Only the last DoF of a link carries its inertia.

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{RbdError, Result};
use crate::muscle::MuscleSet;

pub const SCHEMA: &str = "rbd-tree/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointType {
    Revolute,
    Spherical,
    Free,
}

impl JointType {
    pub fn dof(self) -> usize {
        match self {
            JointType::Revolute => 1,
            JointType::Spherical => 3,
            JointType::Free => 6,
        }
    }
}

/// Fixed placement of a joint frame in its parent's frame.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub xyz: [f64; 3],
    /// Roll, pitch, yaw in radians.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Origin {
            xyz: [x, y, z],
            rpy: [0.0; 3],
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yaw] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yaw),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: JointType,
    /// Joint axis in the joint frame; used by revolute joints only.
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    pub origin: Origin,
    pub mass: f64,
    pub com: [f64; 3],
    /// Rotational inertia about the center of mass, row-major.
    pub inertia: [[f64; 3]; 3],
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Link {
    /// Link with a diagonal inertia tensor.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        parent: Option<usize>,
        joint: JointType,
        axis: [f64; 3],
        origin: Origin,
        mass: f64,
        com: [f64; 3],
        diag_inertia: [f64; 3],
    ) -> Self {
        let [a, b, c] = diag_inertia;
        Link {
            name: name.into(),
            parent,
            joint,
            axis,
            origin,
            mass,
            com,
            inertia: [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerSite {
    pub link: usize,
    pub offset: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum DofKind {
    Revolute,
    Prismatic,
}

#[derive(Clone, Debug)]
pub(crate) struct Body {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

/// One scalar coordinate of the flattened tree.
#[derive(Clone, Debug)]
pub(crate) struct Dof {
    pub parent: Option<usize>,
    pub kind: DofKind,
    pub axis: Vector3<f64>,
    /// Placement relative to the parent DoF frame (identity inside a joint).
    pub origin: Isometry3<f64>,
    pub body: Option<Body>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    schema: String,
    links: Vec<Link>,
    gravity: [f64; 3],
    #[serde(default)]
    markers: Vec<MarkerSite>,
    total_mass: f64,
    #[serde(default)]
    muscles: Option<MuscleSet>,
}

/// Validated articulated chain. Immutable apart from the gravity vector.
#[derive(Clone, Debug)]
pub struct KinematicTree {
    links: Vec<Link>,
    pub gravity: Vector3<f64>,
    markers: Vec<MarkerSite>,
    total_mass: f64,
    muscles: Option<MuscleSet>,
    dofs: Vec<Dof>,
    link_dofs: Vec<(usize, usize)>,
}

impl PartialEq for KinematicTree {
    fn eq(&self, other: &Self) -> bool {
        self.links == other.links
            && self.gravity == other.gravity
            && self.markers == other.markers
            && self.total_mass == other.total_mass
            && self.muscles == other.muscles
    }
}

impl KinematicTree {
    pub fn new(
        links: Vec<Link>,
        gravity: [f64; 3],
        markers: Vec<MarkerSite>,
        muscles: Option<MuscleSet>,
    ) -> Result<Self> {
        let total_mass = links.iter().map(|l| l.mass).sum();
        Self::build(links, gravity, markers, total_mass, muscles)
    }

    fn build(
        links: Vec<Link>,
        gravity: [f64; 3],
        markers: Vec<MarkerSite>,
        total_mass: f64,
        muscles: Option<MuscleSet>,
    ) -> Result<Self> {
        let bad = |m: String| Err(RbdError::InvalidTree(m));
        if links.is_empty() {
            return bad("no links".into());
        }
        if gravity.iter().any(|g| !g.is_finite()) {
            return bad("non-finite gravity".into());
        }
        let mut roots = 0;
        for (i, l) in links.iter().enumerate() {
            match l.parent {
                None => roots += 1,
                Some(p) if p >= i => {
                    return bad(format!("link {i} ({}) has parent {p} >= own index", l.name))
                }
                Some(_) => {}
            }
            if l.joint == JointType::Free && l.parent.is_some() {
                return bad(format!("free joint on non-root link {}", l.name));
            }
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return bad(format!("link {} mass must be positive", l.name));
            }
            let inertia = Matrix3::from_fn(|r, c| l.inertia[r][c]);
            if (inertia - inertia.transpose()).amax() > 1e-12 * inertia.amax().max(1.0)
                || inertia.cholesky().is_none()
            {
                return bad(format!("link {} inertia is not symmetric positive definite", l.name));
            }
            let axis = Vector3::from(l.axis);
            if l.joint == JointType::Revolute && (axis.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("link {} joint axis is not a unit vector", l.name));
            }
            let finite = l.com.iter().chain(&l.origin.xyz).chain(&l.origin.rpy).all(|v| v.is_finite());
            if !finite {
                return bad(format!("link {} has non-finite geometry", l.name));
            }
        }
        if roots != 1 {
            return bad(format!("expected exactly one root, found {roots}"));
        }
        let sum: f64 = links.iter().map(|l| l.mass).sum();
        if (sum - total_mass).abs() > 1e-9 * sum.max(1.0) {
            return bad(format!("total mass {total_mass} != sum of link masses {sum}"));
        }
        for (k, m) in markers.iter().enumerate() {
            if m.link >= links.len() || m.offset.iter().any(|v| !v.is_finite()) {
                return bad(format!("marker {k} is invalid"));
            }
        }

        let (dofs, link_dofs) = flatten(&links);
        if let Some(ms) = &muscles {
            let root = if links[0].joint == JointType::Free { 6 } else { 0 };
            ms.check_width(dofs.len() - root)?;
        }
        Ok(KinematicTree {
            links,
            gravity: Vector3::from(gravity),
            markers,
            total_mass,
            muscles,
            dofs,
            link_dofs,
        })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn markers(&self) -> &[MarkerSite] {
        &self.markers
    }

    pub fn muscles(&self) -> Option<&MuscleSet> {
        self.muscles.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn dof_count(&self) -> usize {
        self.dofs.len()
    }

    /// Unactuated root coordinates: 6 for a free root, otherwise 0.
    pub fn root_dof(&self) -> usize {
        if self.links[0].joint == JointType::Free {
            6
        } else {
            0
        }
    }

    pub fn actuated_dof(&self) -> usize {
        self.dof_count() - self.root_dof()
    }

    /// Coordinate range `start..end` belonging to link `i`.
    pub fn link_dof_range(&self, i: usize) -> std::ops::Range<usize> {
        let (s, e) = self.link_dofs[i];
        s..e
    }

    pub fn with_gravity(mut self, g: [f64; 3]) -> Self {
        self.gravity = Vector3::from(g);
        self
    }

    pub fn with_muscles(self, muscles: MuscleSet) -> Result<Self> {
        let gravity = self.gravity.into();
        Self::build(self.links, gravity, self.markers, self.total_mass, Some(muscles))
    }

    pub(crate) fn dofs(&self) -> &[Dof] {
        &self.dofs
    }

    pub(crate) fn check_len(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.dofs.len() {
            return Err(RbdError::LengthMismatch {
                what,
                expected: self.dofs.len(),
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(RbdError::NonFinite(what));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = TreeFile {
            schema: SCHEMA.to_string(),
            links: self.links.clone(),
            gravity: self.gravity.into(),
            markers: self.markers.clone(),
            total_mass: self.total_mass,
            muscles: self.muscles.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(s)?;
        if file.schema != SCHEMA {
            return Err(RbdError::Format(format!(
                "unsupported schema `{}` (expected `{SCHEMA}`)",
                file.schema
            )));
        }
        Self::build(file.links, file.gravity, file.markers, file.total_mass, file.muscles)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn flatten(links: &[Link]) -> (Vec<Dof>, Vec<(usize, usize)>) {
    let mut dofs: Vec<Dof> = Vec::new();
    let mut link_dofs = Vec::with_capacity(links.len());
    let ex = Vector3::x();
    let ey = Vector3::y();
    let ez = Vector3::z();
    for l in links {
        let axes: Vec<(DofKind, Vector3<f64>)> = match l.joint {
            JointType::Revolute => vec![(DofKind::Revolute, Vector3::from(l.axis))],
            JointType::Spherical => vec![
                (DofKind::Revolute, ex),
                (DofKind::Revolute, ey),
                (DofKind::Revolute, ez),
            ],
            JointType::Free => vec![
                (DofKind::Prismatic, ex),
                (DofKind::Prismatic, ey),
                (DofKind::Prismatic, ez),
                (DofKind::Revolute, ex),
                (DofKind::Revolute, ey),
                (DofKind::Revolute, ez),
            ],
        };
        let start = dofs.len();
        let n = axes.len();
        for (k, (kind, axis)) in axes.into_iter().enumerate() {
            let parent = if k == 0 {
                l.parent.map(|p| link_dofs_end(&link_dofs, p))
            } else {
                Some(dofs.len() - 1)
            };
            let origin = if k == 0 {
                l.origin.isometry()
            } else {
                Isometry3::identity()
            };
            let body = (k + 1 == n).then(|| Body {
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: Matrix3::from_fn(|r, c| l.inertia[r][c]),
            });
            dofs.push(Dof {
                parent,
                kind,
                axis,
                origin,
                body,
            });
        }
        link_dofs.push((start, dofs.len()));
    }
    (dofs, link_dofs)
}

fn link_dofs_end(link_dofs: &[(usize, usize)], link: usize) -> usize {
    link_dofs[link].1 - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum() -> KinematicTree {
        let l = Link::new(
            "bob",
            None,
            JointType::Revolute,
            [0.0, 0.0, 1.0],
            Origin::default(),
            2.0,
            [0.0, -0.5, 0.0],
            [0.01, 0.01, 0.02],
        );
        KinematicTree::new(vec![l], [0.0, -9.81, 0.0], vec![], None).unwrap()
    }

    #[test]
    fn flattening_counts() {
        let mut links = vec![Link::new(
            "root",
            None,
            JointType::Free,
            [0.0, 0.0, 1.0],
            Origin::default(),
            1.0,
            [0.0; 3],
            [1.0; 3],
        )];
        links.push(Link {
            name: "ball".into(),
            parent: Some(0),
            joint: JointType::Spherical,
            ..links[0].clone()
        });
        links.push(Link {
            name: "hinge".into(),
            parent: Some(1),
            joint: JointType::Revolute,
            ..links[0].clone()
        });
        let t = KinematicTree::new(links, [0.0; 3], vec![], None).unwrap();
        assert_eq!(t.dof_count(), 10);
        assert_eq!(t.root_dof(), 6);
        assert_eq!(t.actuated_dof(), 4);
        assert_eq!(t.link_dof_range(1), 6..9);
        assert_eq!(t.dofs()[9].parent, Some(8));
        assert_eq!(t.dofs()[6].parent, Some(5));
        assert!(t.dofs()[5].body.is_some() && t.dofs()[4].body.is_none());
    }

    #[test]
    fn rejects_bad_trees() {
        let p = pendulum();
        let mut links = p.links().to_vec();
        links[0].mass = 0.0;
        assert!(KinematicTree::new(links, [0.0; 3], vec![], None).is_err());

        let mut links = p.links().to_vec();
        links[0].inertia[0][1] = 0.5;
        assert!(KinematicTree::new(links, [0.0; 3], vec![], None).is_err());

        let mut links = p.links().to_vec();
        links.push(links[0].clone());
        assert!(KinematicTree::new(links.clone(), [0.0; 3], vec![], None).is_err());
        links[1].parent = Some(1);
        assert!(KinematicTree::new(links, [0.0; 3], vec![], None).is_err());

        let marker = MarkerSite {
            link: 3,
            offset: [0.0; 3],
        };
        assert!(KinematicTree::new(p.links().to_vec(), [0.0; 3], vec![marker], None).is_err());
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let p = pendulum();
        let back = KinematicTree::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let wrong = p.to_json().replace(SCHEMA, "rbd-tree/0");
        assert!(matches!(KinematicTree::from_json(&wrong), Err(RbdError::Format(_))));
        let heavy = p.to_json().replace("\"total_mass\": 2.0", "\"total_mass\": 3.0");
        assert!(matches!(KinematicTree::from_json(&heavy), Err(RbdError::InvalidTree(_))));
    }
}
