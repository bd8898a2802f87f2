//! Articulated rigid-body oracle.
//!
//! Inverse dynamics (RNEA), the composite-rigid-body mass matrix, forward
//! dynamics, a semi-implicit Euler integrator, a linear muscle model with a
//! minimum-norm activation solver, and surface EMG synthesis. These produce
//! every synthetic dynamics label and drive the rollout benchmark.

pub mod dynamics;
pub mod emg;
pub mod error;
pub mod fixtures;
pub mod kinematics;
pub mod muscle;
pub mod tree;

pub use dynamics::{
    forward_dynamics, kinetic_energy, mass_matrix, potential_energy, rnea, simulate, step, ExternalForce,
    GeneralizedState,
};
pub use emg::{synth_emg, EmgModel};
pub use error::{RbdError, Result};
pub use kinematics::{forward_kinematics, FkResult};
pub use muscle::{muscle_to_torque, solve_activations, Muscle, MuscleSet};
pub use tree::{JointType, KinematicTree, Link, MarkerSite, Origin};
